//! Self-critical sequence training.
//!
//! The model's own greedy decode is the baseline. A sampled rollout is scored against the
//! reference with CIDEr-D, the score difference is broadcast to every unmasked token of the
//! rollout, and the masked, length-normalized policy-gradient loss is backpropagated
//! through the rollout's log-probabilities.

mod decode;
mod reward;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use decode::{decode_greedy, decode_sample, DecodeOutput};
pub use reward::{compute_rewards, scst_loss, RewardVector};
pub use train::{evaluate_greedy, rollout_backward, rollout_gradient, scst_train, scst_train_with, ScstConfig, ScstExample};

use crate::metrics::MetricError;
use crate::seqmodel::ModelError;

#[derive(Debug, Error, PartialEq)]
pub enum ScstError {
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("every position is masked")]
    AllMasked,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Per-epoch training summary (one JSON line of the training log).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScstBatchStats {
    pub epoch: usize,
    pub mean_reward: f64,
    pub mean_baseline: f64,
    pub mean_sample: f64,
    pub loss: f64,
    pub sequences: usize,
}
