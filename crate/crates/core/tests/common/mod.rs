#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ultrastf::models::{forward_on_tape, AttentionKind, ForwardOptions, Model, ModelConfig, ModelKind, ParamVars};
use ultrastf::numerics::{grad, Tape, Tensor, Var};
use ultrastf::Result;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

pub const KINDS: [ModelKind; 4] = [
    ModelKind::UltraStf,
    ModelKind::SparseTsf,
    ModelKind::SparseTsfMlp,
    ModelKind::Linear,
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// `sum(v * r)` for a fixed pseudo-random `r`, turning any output into a
/// scalar whose gradient touches every entry.
pub fn probe(tape: &mut Tape, v: Var, seed: u64) -> Result<Var> {
    let shape = tape.shape(v).to_vec();
    let r = random_tensor(&mut rng(seed ^ 0x9e37_79b9), &shape, 1.0);
    let r = tape.constant(r);
    let m = tape.mul(v, r)?;
    Ok(tape.sum(m))
}

/// Norm-wise relative error between analytic and central-difference
/// gradients of the scalar built by `f` over `inputs`.
pub fn grad_check(inputs: &[Tensor], f: &dyn Fn(&mut Tape, &[Var]) -> Result<Var>) -> f64 {
    let eval = |vals: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let leaves: Vec<Var> = vals.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &leaves).unwrap();
        tape.value(out).item().unwrap()
    };
    let mut tape = Tape::new();
    let leaves: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &leaves).unwrap();
    let analytic: Vec<f64> = grad(&tape, out, &leaves)
        .unwrap()
        .into_iter()
        .flat_map(Tensor::into_data)
        .collect();

    let mut numeric = Vec::with_capacity(analytic.len());
    let mut vals = inputs.to_vec();
    for i in 0..vals.len() {
        for k in 0..vals[i].len() {
            let orig = vals[i].data()[k];
            vals[i] = set(&vals[i], k, orig + FD_STEP);
            let up = eval(&vals);
            vals[i] = set(&vals[i], k, orig - FD_STEP);
            let down = eval(&vals);
            vals[i] = set(&vals[i], k, orig);
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
    }
    rel_error(&analytic, &numeric)
}

fn set(t: &Tensor, k: usize, v: f64) -> Tensor {
    let mut d = t.data().to_vec();
    d[k] = v;
    Tensor::new(t.shape().to_vec(), d).unwrap()
}

pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

/// A small random architecture of `kind` with `w` in {4, 12} and
/// `t_in <= 48`.
pub fn random_config(rng: &mut impl Rng, kind: ModelKind) -> ModelConfig {
    let w = if rng.random_bool(0.5) { 4 } else { 12 };
    let t_in = rng.random_range(w..=48);
    let t_out = rng.random_range(1..=2 * w);
    match kind {
        ModelKind::UltraStf => {
            let heads = [1, 1, 2, 4][rng.random_range(0..4)];
            ModelConfig {
                heads,
                attention: if rng.random_bool(0.5) {
                    AttentionKind::Relu
                } else {
                    AttentionKind::Softmax
                },
                ..ModelConfig::ultrastf(t_in, t_out, w, rng.random_range(1..=4), rng.random_range(1..=3))
            }
        }
        ModelKind::SparseTsf => ModelConfig::sparsetsf(t_in, t_out, w),
        ModelKind::SparseTsfMlp => {
            ModelConfig::sparsetsf_mlp(t_in, t_out, w, rng.random_range(1..=3), rng.random_range(2..=8))
        }
        ModelKind::Linear => ModelConfig::linear(t_in, t_out),
    }
}

/// Overwrites every parameter with uniform noise so no gradient path is
/// trivially zero.
pub fn randomize(model: &mut Model, rng: &mut impl Rng, scale: f64) {
    for (_, t) in model.params_mut().iter_mut() {
        *t = random_tensor(rng, t.shape(), scale);
    }
}

/// Gradient check of the full forward plus MAE loss with respect to every
/// parameter, for a random config and input drawn from `seed`.
pub fn model_grad_check(kind: ModelKind, seed: u64) -> (ModelConfig, f64) {
    let mut r = rng(seed);
    let config = random_config(&mut r, kind);
    let mut model = Model::init(config.clone(), seed).unwrap();
    randomize(&mut model, &mut r, 0.5);
    let n = r.random_range(1..=3);
    let x = random_tensor(&mut r, &[n, config.t_in], 2.0);
    let y = random_tensor(&mut r, &[n, config.t_out], 2.0);
    let names: Vec<String> = model.params().iter().map(|(k, _)| k.to_string()).collect();
    let inputs: Vec<Tensor> = model.params().iter().map(|(_, t)| t.clone()).collect();
    let cfg = config.clone();
    let err = grad_check(&inputs, &|tape, leaves| {
        let vars: ParamVars = names.iter().cloned().zip(leaves.iter().copied()).collect();
        let xv = tape.constant(x.clone());
        let out = forward_on_tape(tape, &cfg, &vars, xv, ForwardOptions::default())?;
        let yv = tape.constant(y.clone());
        let d = tape.sub(out, yv)?;
        let a = tape.abs(d);
        tape.mean(a)
    });
    (config, err)
}

/// Exhaustive z-normalised nearest window, smallest offset on ties.
pub fn brute_nearest(shape: &[f64], series: &[f64]) -> Option<(usize, f64)> {
    let z = |v: &[f64]| -> Option<Vec<f64>> {
        let n = v.len() as f64;
        let mu = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n).sqrt();
        (sd >= 1e-8).then(|| v.iter().map(|x| (x - mu) / sd).collect())
    };
    let zs = z(shape)?;
    let mut best: Option<(usize, f64)> = None;
    for o in 0..=series.len().checked_sub(shape.len())? {
        if let Some(zw) = z(&series[o..o + shape.len()]) {
            let d = zs.iter().zip(&zw).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((o, d));
            }
        }
    }
    best
}
