use crate::models::ParamSet;
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First/second moment estimates, one tensor per parameter in set order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update, elementwise.
pub fn adam_step(params: &mut ParamSet, grads: &[Tensor], state: &mut AdamState, hp: AdamParams) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    for (((_, p), g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
        for i in 0..p.len() {
            let gi = g.data()[i];
            m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * gi;
            v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SgdState {
    pub velocity: Vec<Tensor>,
}

impl SgdState {
    pub fn new(params: &ParamSet) -> Self {
        SgdState {
            velocity: params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect(),
        }
    }
}

/// Heavy-ball SGD: `v = momentum * v + g; p -= lr * v`.
pub fn sgd_step(params: &mut ParamSet, grads: &[Tensor], state: &mut SgdState, lr: f64, momentum: f64) {
    for (((_, p), g), vel) in params.iter_mut().zip(grads).zip(state.velocity.iter_mut()) {
        let (p, vel) = (p.data_mut(), vel.data_mut());
        for i in 0..p.len() {
            vel[i] = momentum * vel[i] + g.data()[i];
            p[i] -= lr * vel[i];
        }
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    const HP: AdamParams = AdamParams {
        lr: 1e-3,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };

    fn single(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("a", Tensor::vector(vec![v]));
        p
    }

    #[test]
    fn first_step_matches_scalar_oracle() {
        let mut p = single(1.0);
        let mut s = AdamState::new(&p);
        let g = 0.2;
        adam_step(&mut p, &[Tensor::vector(vec![g])], &mut s, HP);
        // m_hat = g, v_hat = g^2 after bias correction.
        let m_hat = (0.1 * g) / (1.0 - 0.9);
        let v_hat = (0.001 * g * g) / (1.0 - 0.999);
        let expect = 1.0 - 1e-3 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p.get("a").unwrap().data()[0] - expect).abs() < 1e-15);
        assert!((p.get("a").unwrap().data()[0] - (1.0 - 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn zero_grad_gives_zero_update() {
        let mut p = single(0.7);
        let mut s = AdamState::new(&p);
        for _ in 0..3 {
            adam_step(&mut p, &[Tensor::vector(vec![0.0])], &mut s, HP);
        }
        assert_eq!(p.get("a").unwrap().data(), &[0.7]);
    }

    #[test]
    fn elements_update_independently() {
        let mut p = ParamSet::new();
        p.insert("a", Tensor::vector(vec![1.0, 1.0]));
        p.insert("b", Tensor::vector(vec![5.0]));
        let mut s = AdamState::new(&p);
        let grads = [Tensor::vector(vec![0.5, 0.0]), Tensor::vector(vec![-3.0])];
        adam_step(&mut p, &grads, &mut s, HP);
        let a = p.get("a").unwrap().data().to_vec();
        assert!(a[0] < 1.0);
        assert_eq!(a[1], 1.0);
        assert!(p.get("b").unwrap().data()[0] > 5.0);
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let mut p = single(0.0);
        let mut s = SgdState::new(&p);
        let g = [Tensor::vector(vec![1.0])];
        sgd_step(&mut p, &g, &mut s, 0.1, 0.5);
        sgd_step(&mut p, &g, &mut s, 0.1, 0.5);
        assert!((p.get("a").unwrap().data()[0] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn clipping() {
        let mut g = vec![Tensor::vector(vec![3.0]), Tensor::vector(vec![4.0])];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-15);
        let mut small = vec![Tensor::vector(vec![0.1])];
        clip_grad_norm(&mut small, 1.0);
        assert_eq!(small[0].data(), &[0.1]);
    }
}
