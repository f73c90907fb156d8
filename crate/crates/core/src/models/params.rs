use indexmap::IndexMap;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::models::{ModelConfig, ModelKind};
use crate::numerics::{Tape, Tensor, Var};
use crate::rng;

/// How a parameter tensor is initialised.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Standard normal entries (shape-bank keys and values).
    Normal,
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    Uniform { fan_in: usize },
    /// Centre tap set to `scale`, everything else zero.
    ScaledDelta { scale: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    fn new(name: impl Into<String>, shape: &[usize], init: Init) -> Self {
        ParamSpec {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Output length of core block `b`: inner blocks keep `t_in`, the last one
/// emits `t_out`.
pub fn block_out_len(config: &ModelConfig, b: usize) -> usize {
    if b + 1 == config.blocks {
        config.t_out
    } else {
        config.t_in
    }
}

/// The ordered parameter inventory of a configuration.
pub fn param_layout(config: &ModelConfig) -> Result<Vec<ParamSpec>> {
    config.validate()?;
    let w = config.period;
    let k_in = config.k_in();
    let aggregation = || {
        ParamSpec::new(
            "aggregation.kernel",
            &[config.kernel_len()],
            Init::ScaledDelta { scale: 0.5 },
        )
    };
    let mut out = Vec::new();
    match config.kind {
        ModelKind::UltraStf => {
            out.push(aggregation());
            let d = config.shapes;
            for b in 0..config.blocks {
                let p = format!("block{b}");
                if config.heads == 1 {
                    out.push(ParamSpec::new(
                        format!("{p}.bank.query"),
                        &[w, w],
                        Init::Uniform { fan_in: w },
                    ));
                } else {
                    let hw = config.head_width();
                    for h in 0..config.heads {
                        for role in ["query", "key", "value"] {
                            out.push(ParamSpec::new(
                                format!("{p}.bank.head{h}.{role}"),
                                &[hw, w],
                                Init::Uniform { fan_in: w },
                            ));
                        }
                    }
                    out.push(ParamSpec::new(
                        format!("{p}.bank.output"),
                        &[w, hw * config.heads],
                        Init::Uniform {
                            fan_in: hw * config.heads,
                        },
                    ));
                }
                out.push(ParamSpec::new(format!("{p}.bank.key"), &[d, w], Init::Normal));
                out.push(ParamSpec::new(format!("{p}.bank.value"), &[d, w], Init::Normal));
                let k_out = block_out_len(config, b).div_ceil(w);
                out.push(ParamSpec::new(
                    format!("{p}.cross.weight"),
                    &[k_in, k_out],
                    Init::Uniform { fan_in: k_in },
                ));
            }
        }
        ModelKind::SparseTsf => {
            out.push(aggregation());
            out.push(ParamSpec::new(
                "cross.weight",
                &[k_in, config.k_out()],
                Init::Uniform { fan_in: k_in },
            ));
        }
        ModelKind::SparseTsfMlp => {
            out.push(aggregation());
            for (i, (fan_in, fan_out)) in mlp_widths(config).into_iter().enumerate() {
                out.push(ParamSpec::new(
                    format!("mlp.layer{i}.weight"),
                    &[fan_in, fan_out],
                    Init::Uniform { fan_in },
                ));
                out.push(ParamSpec::new(
                    format!("mlp.layer{i}.bias"),
                    &[fan_out],
                    Init::Uniform { fan_in },
                ));
            }
        }
        ModelKind::Linear => out.push(ParamSpec::new(
            "linear.weight",
            &[config.t_in, config.t_out],
            Init::Uniform {
                fan_in: config.t_in,
            },
        )),
    }
    Ok(out)
}

/// `(fan_in, fan_out)` of each perceptron layer over the segment axis.
pub fn mlp_widths(config: &ModelConfig) -> Vec<(usize, usize)> {
    let depth = config.mlp_depth;
    (0..depth)
        .map(|i| {
            let fan_in = if i == 0 { config.k_in() } else { config.mlp_hidden };
            let fan_out = if i + 1 == depth {
                config.k_out()
            } else {
                config.mlp_hidden
            };
            (fan_in, fan_out)
        })
        .collect()
}

fn init_tensor(spec: &ParamSpec, rng: &mut impl Rng) -> Tensor {
    let n = spec.numel();
    let data = match spec.init {
        Init::Normal => (0..n).map(|_| StandardNormal.sample(rng)).collect(),
        Init::Uniform { fan_in } => {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
        }
        Init::ScaledDelta { scale } => {
            let mut v = vec![0.0; n];
            v[n / 2] = scale;
            v
        }
    };
    Tensor::new(spec.shape.clone(), data).expect("layout shapes are consistent")
}

/// Ordered, named learnable tensors of one model instance.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamSet {
    tensors: IndexMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fresh parameters for `config`, drawn from the `init` substream of `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = rng::substream(seed, "init");
        let mut set = ParamSet::new();
        for spec in param_layout(config)? {
            let t = init_tensor(&spec, &mut rng);
            set.insert(spec.name, t);
        }
        Ok(set)
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars across all tensors.
    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Checks names, order and shapes against the layout of `config`.
    pub fn check_layout(&self, config: &ModelConfig) -> Result<()> {
        let layout = param_layout(config)?;
        if layout.len() != self.len() {
            return Err(Error::shape(
                "ParamSet",
                format!(
                    "config expects {} tensors, parameter set has {}",
                    layout.len(),
                    self.len()
                ),
            ));
        }
        for (spec, (name, t)) in layout.iter().zip(self.iter()) {
            if spec.name != name || spec.shape != t.shape() {
                return Err(Error::shape(
                    "ParamSet",
                    format!(
                        "expected `{}` {:?}, found `{name}` {:?}",
                        spec.name,
                        spec.shape,
                        t.shape()
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Records every tensor on `tape` as a leaf.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> ParamVars {
        let vars = self
            .tensors
            .iter()
            .map(|(k, t)| (k.clone(), tape.leaf(t.clone(), trainable)))
            .collect();
        ParamVars { vars }
    }
}

/// Tape handles for a registered [`ParamSet`], in the same order.
#[derive(Clone, Debug)]
pub struct ParamVars {
    vars: IndexMap<String, Var>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl FromIterator<(String, Var)> for ParamVars {
    /// Binds names to existing tape handles, e.g. leaves created elsewhere.
    fn from_iter<I: IntoIterator<Item = (String, Var)>>(iter: I) -> Self {
        ParamVars {
            vars: iter.into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_matches_layout() {
        let config = ModelConfig::ultrastf(48, 12, 12, 3, 2);
        let a = ParamSet::init(&config, 5).unwrap();
        let b = ParamSet::init(&config, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, ParamSet::init(&config, 6).unwrap());
        a.check_layout(&config).unwrap();
    }

    #[test]
    fn kernel_starts_as_half_delta() {
        let a = ParamSet::init(&ModelConfig::sparsetsf(24, 12, 12), 0).unwrap();
        let k = a.get("aggregation.kernel").unwrap();
        assert_eq!(k.len(), 13);
        assert_eq!(k.data()[6], 0.5);
        assert_eq!(k.sum(), 0.5);
    }

    #[test]
    fn inner_blocks_keep_input_length() {
        let config = ModelConfig::ultrastf(25, 5, 12, 2, 3);
        let p = ParamSet::init(&config, 0).unwrap();
        assert_eq!(p.get("block0.cross.weight").unwrap().shape(), &[2, 3]);
        assert_eq!(p.get("block2.cross.weight").unwrap().shape(), &[2, 1]);
    }

    #[test]
    fn multi_head_layout() {
        let mut config = ModelConfig::ultrastf(24, 12, 12, 4, 1);
        config.heads = 5;
        let p = ParamSet::init(&config, 0).unwrap();
        assert!(p.get("block0.bank.query").is_err());
        assert_eq!(p.get("block0.bank.head4.key").unwrap().shape(), &[2, 12]);
        assert_eq!(p.get("block0.bank.output").unwrap().shape(), &[12, 10]);
    }

    #[test]
    fn layout_mismatch_detected() {
        let config = ModelConfig::sparsetsf(24, 12, 12);
        let mut p = ParamSet::init(&config, 0).unwrap();
        p.insert("cross.weight", Tensor::zeros(&[3, 1]));
        assert!(matches!(p.check_layout(&config), Err(Error::Shape { .. })));
    }
}
