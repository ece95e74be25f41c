use super::params::{Gradients, ModelParams};
use crate::tensor::Matrix;
use crate::Scalar;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    m: Vec<Matrix<T>>,
    v: Vec<Matrix<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        let zeros: Vec<Matrix<T>> = params.tensors().iter().map(|t| Matrix::zeros(t.rows(), t.cols())).collect();
        Self { m: zeros.clone(), v: zeros, step: 0 }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<T: Scalar>(params: &mut ModelParams<T>, grads: &Gradients<T>, state: &mut AdamState<T>, cfg: &AdamConfig) {
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);
    let (lr, eps) = (T::of(cfg.lr), T::of(cfg.eps));
    for (((p, g), m), v) in params
        .tensors_mut()
        .iter_mut()
        .zip(grads.tensors())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for (((p, &g), m), v) in p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.as_mut_slice().iter_mut())
            .zip(v.as_mut_slice().iter_mut())
        {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqmodel::{ModelConfig, ParamId};

    fn params() -> ModelParams<f64> {
        ModelParams::init(&ModelConfig { d_model: 4, n_heads: 2, vocab_size: 6, max_len: 4, feature_dim: 2, seed: 3 }).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = params();
        let before = p.clone();
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &Gradients::zeros_like(&before), &mut st, &AdamConfig::default());
        assert_eq!(p, before);
        assert_eq!(st.step(), 1);
    }

    #[test]
    fn first_step_moves_each_weight_by_about_lr_against_the_gradient() {
        let mut p = params();
        let before = p.clone();
        let mut g = Gradients::zeros_like(&p);
        let mut raw = g.tensors().to_vec();
        for (k, x) in raw[ParamId::SelfQuery.index()].as_mut_slice().iter_mut().enumerate() {
            *x = if k % 2 == 0 { 0.37 * (k as f64 + 1.0) } else { -1e-3 };
        }
        g = Gradients::from_tensors(raw);
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig::default();
        adam_step(&mut p, &g, &mut st, &cfg);
        // after bias correction m̂ = g and v̂ = g², so Δ = −lr·g/(|g| + ε)
        for ((&new, &old), &gk) in p
            .get(ParamId::SelfQuery)
            .as_slice()
            .iter()
            .zip(before.get(ParamId::SelfQuery).as_slice())
            .zip(g.get(ParamId::SelfQuery).as_slice())
        {
            let expected = -cfg.lr * gk / (gk.abs() + cfg.eps);
            assert!((new - old - expected).abs() < 1e-15);
            assert!(((new - old).abs() - cfg.lr).abs() < 1e-7);
        }
        assert_eq!(p.get(ParamId::SelfKey), before.get(ParamId::SelfKey));
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = params();
            let mut st = AdamState::new(&p);
            let mut g = Gradients::zeros_like(&p);
            let mut raw = g.tensors().to_vec();
            raw.iter_mut().for_each(|t| t.fill(0.25));
            g = Gradients::from_tensors(raw);
            for _ in 0..3 {
                adam_step(&mut p, &g, &mut st, &AdamConfig::default());
            }
            p
        };
        assert_eq!(run(), run());
    }
}
