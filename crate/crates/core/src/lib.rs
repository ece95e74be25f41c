//! Conditional caption decoding trained with self-critical sequence training.
//!
//! The crate bundles everything needed to train and evaluate a small caption decoder
//! on accident-description data:
//!
//! * [`textproc`]: normalization, vocabulary, n-grams
//! * [`metrics`]: BLEU-1..4, ROUGE-L, METEOR-lite, CIDEr-D and the Fréchet distance
//! * [`seqmodel`]: a one-block transformer decoder with its own reverse-mode tape
//! * [`scst`]: greedy/sampled decoding, CIDEr-difference rewards and the masked policy-gradient loss
//! * [`data`]: annotation restructuring, the binary feature format and a synthetic corpus
//! * [`report`]: table rendering for score reports
//! * [`pipeline`]: example construction and the MLE-then-SCST experiment
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix it to `f64`,
//! which is what training and gradient checks use.

pub mod data;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod scst;
pub mod seed;
pub mod seqmodel;
pub mod tensor;
pub mod textproc;

pub use scalar::Scalar;

pub type Mat = tensor::Matrix<f64>;
pub type Params = seqmodel::ModelParams<f64>;
pub type Grads = seqmodel::Gradients<f64>;
pub type Adam = seqmodel::AdamState<f64>;
pub type Decoded = scst::DecodeOutput<f64>;
pub type Stats = metrics::GaussianStats<f64>;
