//! A one-block conditional transformer decoder with reverse-mode gradients.
//!
//! Token and learned position embeddings feed a causal self-attention sublayer, a
//! cross-attention sublayer over projected clip features, and a GELU feed-forward
//! sublayer, each residual, with layer normalization after cross-attention and after
//! the feed-forward. Logits come from the tied token embedding.

mod adam;
mod checkpoint;
mod infer;
mod loss;
mod model;
mod params;
pub mod tape;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointError};
pub use infer::StepDecoder;
pub use loss::xent_loss;
pub use model::{backward, forward, forward_train, ForwardTrace};
pub use params::{Gradients, ModelParams, ParamId};
pub use train::{sequence_xent, train_mle, train_mle_with, MleConfig, TrainExample};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("bad prefix: {0}")]
    BadPrefix(String),
    #[error("bad features: {0}")]
    BadFeatures(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("every position is masked")]
    AllMasked,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
}

/// Decoder hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub feature_dim: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Defaults (`d_model` 64, 2 heads, `max_len` 24) for the given vocabulary and feature width.
    pub fn new(vocab_size: usize, feature_dim: usize, seed: u64) -> Self {
        Self { d_model: 64, n_heads: 2, vocab_size, max_len: 24, feature_dim, seed }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.d_model == 0 || self.n_heads == 0 {
            return bad("d_model and n_heads must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!("d_model {} is not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.vocab_size < 5 {
            return bad(format!("vocab_size {} < 5", self.vocab_size));
        }
        if self.max_len < 2 {
            return bad(format!("max_len {} < 2", self.max_len));
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let ok = ModelConfig::new(10, 4, 1);
        assert!(ok.validate().is_ok());
        let odd = ModelConfig { d_model: 65, ..ok.clone() };
        assert!(matches!(ModelParams::<f64>::init(&odd), Err(ModelError::InvalidConfig(_))));
        assert!(ModelConfig { vocab_size: 4, ..ok.clone() }.validate().is_err());
        assert!(ModelConfig { max_len: 1, ..ok.clone() }.validate().is_err());
        assert!(ModelConfig { feature_dim: 0, ..ok }.validate().is_err());
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let cfg = ModelConfig::new(12, 5, 42);
        let a = ModelParams::<f64>::init(&cfg).unwrap();
        let b = ModelParams::<f64>::init(&cfg).unwrap();
        assert_eq!(a, b);
        let c = ModelParams::<f64>::init(&ModelConfig { seed: 43, ..cfg.clone() }).unwrap();
        assert_ne!(a.get(ParamId::TokenEmbedding), c.get(ParamId::TokenEmbedding));
        assert_eq!(a.get(ParamId::Norm1Gain).as_slice(), &[1.0; 64]);
        assert_eq!(a.get(ParamId::Norm2Bias).max_abs(), 0.0);
        for id in ParamId::ALL {
            assert_eq!(a.get(id).shape(), id.shape(&cfg));
        }
        let s = (6.0f64 / (64.0 + 64.0)).sqrt();
        assert!(a.get(ParamId::SelfQuery).max_abs() <= s);
    }
}
