use crate::error::{Error, Result};
use crate::models::config::{ModelConfig, ModelKind};
use crate::models::layers::{
    aggregate_on_tape, core_block_on_tape, cross_period_on_tape, denormalize_on_tape,
    normalize_on_tape, segment, unsegment, ShapeBank,
};
use crate::models::params::{block_out_len, mlp_widths, ParamSet, ParamVars};
use crate::numerics::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForwardOptions {
    /// Apply instance normalisation around the network. The sensitivity
    /// probe turns this off.
    pub normalize: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions { normalize: true }
    }
}

fn check_input(tape: &Tape, x: Var, config: &ModelConfig) -> Result<()> {
    match tape.shape(x) {
        [_, t] if *t == config.t_in => {}
        s => {
            return Err(Error::shape(
                "forward",
                format!("expected [n, {}], got {s:?}", config.t_in),
            ))
        }
    }
    if !tape.value(x).is_finite() {
        return Err(Error::Data("input contains NaN or infinite values".into()));
    }
    Ok(())
}

fn periodic_body(tape: &mut Tape, config: &ModelConfig, p: &ParamVars, x: Var) -> Result<Var> {
    let w = config.period;
    let h = aggregate_on_tape(tape, x, p.get("aggregation.kernel")?)?;
    match config.kind {
        ModelKind::UltraStf => {
            let mut h = h;
            for b in 0..config.blocks {
                let bank = ShapeBank::from_vars(p, &format!("block{b}.bank"), config.heads)?;
                let weight = p.get(&format!("block{b}.cross.weight"))?;
                h = core_block_on_tape(
                    tape,
                    h,
                    Some(&bank),
                    weight,
                    w,
                    block_out_len(config, b),
                    config.attention,
                )?;
            }
            Ok(h)
        }
        ModelKind::SparseTsf => core_block_on_tape(
            tape,
            h,
            None,
            p.get("cross.weight")?,
            w,
            config.t_out,
            config.attention,
        ),
        ModelKind::SparseTsfMlp => {
            let seg = segment(tape, h, w)?;
            let (rows, k_in) = (tape.shape(seg)[0], tape.shape(seg)[1]);
            let by_phase = tape.permute(seg, &[0, 2, 1])?;
            let mut z = tape.reshape(by_phase, &[rows * w, k_in])?;
            let widths = mlp_widths(config);
            for i in 0..widths.len() {
                let weight = p.get(&format!("mlp.layer{i}.weight"))?;
                let bias = p.get(&format!("mlp.layer{i}.bias"))?;
                z = tape.matmul(z, weight)?;
                z = tape.add_bias(z, bias)?;
                if i + 1 < widths.len() {
                    z = tape.relu(z);
                }
            }
            let k_out = config.k_out();
            let back = tape.reshape(z, &[rows, w, k_out])?;
            let out = tape.permute(back, &[0, 2, 1])?;
            unsegment(tape, out, config.t_out)
        }
        ModelKind::Linear => unreachable!("linear model has no periodic body"),
    }
}

/// Records the full forward of `config` on `tape`; `x` is `[n, t_in]`.
pub fn forward_on_tape(
    tape: &mut Tape,
    config: &ModelConfig,
    params: &ParamVars,
    x: Var,
    options: ForwardOptions,
) -> Result<Var> {
    check_input(tape, x, config)?;
    let (z, stats) = if options.normalize {
        let (z, s) = normalize_on_tape(tape, x)?;
        (z, Some(s))
    } else {
        (x, None)
    };
    let y = match config.kind {
        ModelKind::Linear => tape.matmul(z, params.get("linear.weight")?)?,
        _ => periodic_body(tape, config, params, z)?,
    };
    match stats {
        Some(s) => denormalize_on_tape(tape, y, &s),
        None => Ok(y),
    }
}

/// A configuration paired with a matching parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: ParamSet,
}

impl Model {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = ParamSet::init(&config, seed)?;
        Ok(Model { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ParamSet) -> Result<Self> {
        params.check_layout(&config)?;
        Ok(Model { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn into_parts(self) -> (ModelConfig, ParamSet) {
        (self.config, self.params)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_with(x, ForwardOptions::default())
    }

    pub fn forward_with(&self, x: &Tensor, options: ForwardOptions) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.params.register(&mut tape, false);
        let xv = tape.constant(x.clone());
        let y = forward_on_tape(&mut tape, &self.config, &vars, xv, options)?;
        Ok(tape.value(y).clone())
    }
}

/// Convenience wrapper for a bare cross-period map over raw segments,
/// `x[n, t_in] -> [n, t_out]`.
pub fn cross_period_series(x: &Tensor, weight: &Tensor, period: usize, t_out: usize) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let wv = tape.constant(weight.clone());
    let seg = segment(&mut tape, xv, period)?;
    let y = cross_period_on_tape(&mut tape, seg, wv)?;
    let out = unsegment(&mut tape, y, t_out)?;
    Ok(tape.value(out).clone())
}
