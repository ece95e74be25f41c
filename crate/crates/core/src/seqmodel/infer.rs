//! Step-by-step inference with cached keys and values.
//!
//! Produces the same logits as [`forward`](super::forward) row by row, but each new token costs
//! one position's worth of work instead of a full pass over the prefix.

use super::params::{ModelParams, ParamId};
use super::tape::{gelu_value, softmax_into, LN_EPS};
use super::ModelError;
use crate::tensor::Matrix;
use crate::textproc::BOS;
use crate::Scalar;

/// Decoding state for one clip.
pub struct StepDecoder<'a, T: Scalar> {
    params: &'a ModelParams<T>,
    cross_keys: Matrix<T>,
    cross_values: Matrix<T>,
    self_keys: Vec<Vec<T>>,
    self_values: Vec<Vec<T>>,
}

fn row_times<T: Scalar>(x: &[T], m: &Matrix<T>) -> Vec<T> {
    Matrix::from_vec(1, x.len(), x.to_vec()).matmul(m).into_vec()
}

fn layer_norm<T: Scalar>(x: &[T], gain: &Matrix<T>, bias: &Matrix<T>) -> Vec<T> {
    let d = T::from_usize(x.len()).expect("width fits");
    let mean = x.iter().copied().sum::<T>() / d;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / d;
    let istd = T::one() / (var + T::of(LN_EPS)).sqrt();
    x.iter()
        .zip(gain.as_slice().iter().zip(bias.as_slice()))
        .map(|(&v, (&g, &b))| (v - mean) * istd * g + b)
        .collect()
}

/// Multi-head attention of one query row over `keys`/`values` rows, before the output projection.
fn attend<T: Scalar>(q: &[T], n_heads: usize, keys: &[&[T]], values: &[&[T]]) -> Vec<T> {
    let d = q.len();
    let dh = d / n_heads;
    let inv_sqrt = T::one() / T::from_usize(dh).expect("head width fits").sqrt();
    let mut out = vec![T::zero(); d];
    let mut scores = vec![T::zero(); keys.len()];
    let mut probs = vec![T::zero(); keys.len()];
    for h in 0..n_heads {
        let span = h * dh..(h + 1) * dh;
        for (s, k) in scores.iter_mut().zip(keys) {
            *s = crate::tensor::dot(&q[span.clone()], &k[span.clone()]) * inv_sqrt;
        }
        softmax_into(&scores, &mut probs);
        for (&p, v) in probs.iter().zip(values) {
            for (o, &x) in out[span.clone()].iter_mut().zip(&v[span.clone()]) {
                *o += p * x;
            }
        }
    }
    out
}

impl<'a, T: Scalar> StepDecoder<'a, T> {
    pub fn new(params: &'a ModelParams<T>, features: &Matrix<T>) -> Result<Self, ModelError> {
        let cfg = params.config();
        if features.rows() == 0 {
            return Err(ModelError::BadFeatures("no feature rows".into()));
        }
        if features.cols() != cfg.feature_dim {
            return Err(ModelError::BadFeatures(format!("feature width {} != {}", features.cols(), cfg.feature_dim)));
        }
        let projected = features.matmul(params.get(ParamId::FeatureProjection));
        Ok(Self {
            params,
            cross_keys: projected.matmul(params.get(ParamId::CrossKey)),
            cross_values: projected.matmul(params.get(ParamId::CrossValue)),
            self_keys: Vec::new(),
            self_values: Vec::new(),
        })
    }

    /// Number of tokens fed so far.
    pub fn len(&self) -> usize {
        self.self_keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.self_keys.is_empty()
    }

    /// Feeds the next token (the first must be BOS) and returns the logits for the one after it.
    pub fn step(&mut self, token: usize) -> Result<Vec<T>, ModelError> {
        let p = self.params;
        let cfg = p.config();
        let pos = self.len();
        if pos == 0 && token != BOS {
            return Err(ModelError::BadPrefix(format!("prefix starts with {token}, not BOS")));
        }
        if pos >= cfg.max_len {
            return Err(ModelError::BadPrefix(format!("prefix length {} exceeds max_len {}", pos + 1, cfg.max_len)));
        }
        if token >= cfg.vocab_size {
            return Err(ModelError::BadPrefix(format!("token id {token} outside vocabulary of {}", cfg.vocab_size)));
        }

        let x0: Vec<T> = p
            .get(ParamId::TokenEmbedding)
            .row(token)
            .iter()
            .zip(p.get(ParamId::PositionEmbedding).row(pos))
            .map(|(&a, &b)| a + b)
            .collect();
        let q = row_times(&x0, p.get(ParamId::SelfQuery));
        self.self_keys.push(row_times(&x0, p.get(ParamId::SelfKey)));
        self.self_values.push(row_times(&x0, p.get(ParamId::SelfValue)));
        let keys: Vec<&[T]> = self.self_keys.iter().map(Vec::as_slice).collect();
        let values: Vec<&[T]> = self.self_values.iter().map(Vec::as_slice).collect();
        let sa = row_times(&attend(&q, cfg.n_heads, &keys, &values), p.get(ParamId::SelfOutput));
        let h1: Vec<T> = x0.iter().zip(&sa).map(|(&a, &b)| a + b).collect();

        let q = row_times(&h1, p.get(ParamId::CrossQuery));
        let keys: Vec<&[T]> = (0..self.cross_keys.rows()).map(|r| self.cross_keys.row(r)).collect();
        let values: Vec<&[T]> = (0..self.cross_values.rows()).map(|r| self.cross_values.row(r)).collect();
        let ca = row_times(&attend(&q, cfg.n_heads, &keys, &values), p.get(ParamId::CrossOutput));
        let r2: Vec<T> = h1.iter().zip(&ca).map(|(&a, &b)| a + b).collect();
        let h2 = layer_norm(&r2, p.get(ParamId::Norm1Gain), p.get(ParamId::Norm1Bias));

        let act: Vec<T> = row_times(&h2, p.get(ParamId::FeedForwardIn)).into_iter().map(gelu_value).collect();
        let down = row_times(&act, p.get(ParamId::FeedForwardOut));
        let r3: Vec<T> = h2.iter().zip(&down).map(|(&a, &b)| a + b).collect();
        let h3 = layer_norm(&r3, p.get(ParamId::Norm2Gain), p.get(ParamId::Norm2Bias));

        Ok(Matrix::from_vec(1, h3.len(), h3).matmul_nt(p.get(ParamId::TokenEmbedding)).into_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqmodel::{forward, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_full_forward_row_by_row() {
        let cfg = ModelConfig { d_model: 16, n_heads: 4, vocab_size: 11, max_len: 9, feature_dim: 5, seed: 3 };
        let params = ModelParams::<f64>::init(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let features = Matrix::from_vec(4, 5, (0..20).map(|_| rng.random_range(-1.0..1.0)).collect());
        let mut prefix = vec![BOS];
        prefix.extend((0..8).map(|_| rng.random_range(0..11)));
        let full = forward(&params, &features, &prefix).unwrap();
        let mut dec = StepDecoder::new(&params, &features).unwrap();
        for (t, &tok) in prefix.iter().enumerate() {
            let row = dec.step(tok).unwrap();
            for (a, b) in row.iter().zip(full.row(t)) {
                assert!((a - b).abs() < 1e-12, "position {t}: {a} vs {b}");
            }
        }
        assert!(matches!(dec.step(4), Err(ModelError::BadPrefix(_))));
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = ModelConfig { d_model: 8, n_heads: 2, vocab_size: 6, max_len: 4, feature_dim: 2, seed: 0 };
        let params = ModelParams::<f64>::init(&cfg).unwrap();
        assert!(StepDecoder::new(&params, &Matrix::zeros(1, 3)).is_err());
        assert!(StepDecoder::new(&params, &Matrix::zeros(0, 2)).is_err());
        let mut dec = StepDecoder::new(&params, &Matrix::zeros(1, 2)).unwrap();
        assert!(dec.step(4).is_err());
        dec.step(BOS).unwrap();
        assert!(dec.step(6).is_err());
    }
}
