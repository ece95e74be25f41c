//! Glue between the data, model and SCST modules: example construction and the
//! MLE-then-SCST experiment on the synthetic corpus.

use std::collections::HashMap;

use crate::data::{synth_corpus, DataError, FeatureClip, Sample, Split, SynthConfig, SynthCorpus};
use crate::metrics::{frechet_distance, gaussian_stats, IdfTable, MetricError};
use crate::tensor::Matrix;
use crate::scst::{evaluate_greedy, scst_train_with, ScstBatchStats, ScstConfig, ScstError, ScstExample};
use crate::seed::derive_seed;
use crate::seqmodel::{train_mle_with, MleConfig, ModelConfig, ModelError, ModelParams, TrainExample};
use crate::textproc::{Caption, Role, Vocab};
use crate::Scalar;

/// Teacher-forcing targets `[BOS, tokens.., EOS]`, with captions cut to fit `max_len`.
pub fn train_examples<T: Scalar>(pairs: &[(&Sample, &FeatureClip)], vocab: &Vocab, role: Role, max_len: usize) -> Vec<TrainExample<T>> {
    pairs
        .iter()
        .map(|(s, clip)| {
            let (ids, mask) = vocab.encode(&s.caption(role).tokens, max_len);
            let tokens = s.caption(role).tokens.len().min(max_len - 2);
            let mut ids: Vec<usize> = ids.into_iter().zip(mask).filter(|&(_, m)| m == 1).map(|(i, _)| i).collect();
            if tokens < s.caption(role).tokens.len() {
                // truncated caption: the encoder dropped EOS along with the tail, so restore it
                ids.truncate(max_len - 1);
                ids.push(crate::textproc::EOS);
            }
            TrainExample { id: s.id.clone(), features: clip.to_matrix(), ids }
        })
        .collect()
}

pub fn scst_examples<T: Scalar>(pairs: &[(&Sample, &FeatureClip)], role: Role) -> Vec<ScstExample<T>> {
    pairs
        .iter()
        .map(|(s, clip)| ScstExample { id: s.id.clone(), features: clip.to_matrix(), reference: s.caption(role).clone() })
        .collect()
}

/// IDF table over the `role` captions of `samples`.
pub fn idf_for<'a>(samples: impl IntoIterator<Item = &'a Sample>, role: Role) -> Result<IdfTable, MetricError> {
    let refs: Vec<&[String]> = samples.into_iter().map(|s| s.caption(role).tokens.as_slice()).collect();
    IdfTable::build(&refs)
}

fn split_pairs(corpus: &SynthCorpus, split: Split) -> Vec<(&Sample, &FeatureClip)> {
    let by_id: HashMap<&str, usize> = corpus.samples.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    corpus.splits.ids(split).iter().map(|id| (&corpus.samples[by_id[id.as_str()]], &corpus.clips[by_id[id.as_str()]])).collect()
}

/// Every frame of every clip as one row.
pub fn stack_frames(clips: &[FeatureClip]) -> Result<Matrix<f64>, MetricError> {
    let dim = clips.first().ok_or(MetricError::EmptyCorpus)?.dim;
    let mut data = Vec::new();
    for c in clips {
        if c.dim != dim {
            return Err(MetricError::DimensionMismatch(dim, c.dim));
        }
        data.extend(c.data.iter().map(|&x| f64::from(x)));
    }
    Ok(Matrix::from_vec(data.len() / dim, dim, data))
}

/// One temporally mean-pooled row per clip.
pub fn pool_clips(clips: &[FeatureClip]) -> Result<Matrix<f64>, MetricError> {
    let dim = clips.first().ok_or(MetricError::EmptyCorpus)?.dim;
    let mut data = Vec::with_capacity(clips.len() * dim);
    for c in clips {
        if c.dim != dim {
            return Err(MetricError::DimensionMismatch(dim, c.dim));
        }
        data.extend(c.mean_pooled::<f64>());
    }
    Ok(Matrix::from_vec(clips.len(), dim, data))
}

/// `(FID, VID)`: the Fréchet distance over per-frame features and over per-clip pooled features.
pub fn fid_vid(a: &[FeatureClip], b: &[FeatureClip]) -> Result<(f64, f64), MetricError> {
    let fid = frechet_distance(&gaussian_stats(&stack_frames(a)?)?, &gaussian_stats(&stack_frames(b)?)?)?;
    let vid = frechet_distance(&gaussian_stats(&pool_clips(a)?)?, &gaussian_stats(&pool_clips(b)?)?)?;
    Ok((fid, vid))
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scst(#[from] ScstError),
}

/// One MLE-then-SCST run on a synthetic corpus.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub corpus: SynthConfig,
    pub role: Role,
    pub seed: u64,
    pub model: Option<ModelConfig>,
    pub mle: MleConfig,
    pub scst: ScstConfig,
}

impl ExperimentConfig {
    pub fn new(corpus: SynthConfig, seed: u64) -> Self {
        Self {
            corpus,
            role: Role::Description,
            seed,
            model: None,
            mle: MleConfig { seed: derive_seed(seed, &["mle".into()]), ..MleConfig::default() },
            scst: ScstConfig { seed: derive_seed(seed, &["scst".into()]), ..ScstConfig::default() },
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub mle_curve: Vec<f64>,
    pub scst_log: Vec<ScstBatchStats>,
    /// Held-out (test split) greedy CIDEr-D after MLE only.
    pub mle_cider: f64,
    /// Held-out greedy CIDEr-D after SCST.
    pub scst_cider: f64,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, ExperimentError> {
    let corpus = synth_corpus(&cfg.corpus)?;
    let train = split_pairs(&corpus, Split::Train);
    let test = split_pairs(&corpus, Split::Test);
    let train_caps: Vec<&Caption> = train.iter().map(|(s, _)| s.caption(cfg.role)).collect();
    let vocab = Vocab::build(train_caps.iter().copied(), 1);
    let model_cfg = cfg.model.clone().unwrap_or_else(|| {
        ModelConfig::new(vocab.len(), cfg.corpus.dim, derive_seed(cfg.seed, &["init".into()]))
    });
    let mut params = ModelParams::<f64>::init(&model_cfg)?;

    let mle_data = train_examples(&train, &vocab, cfg.role, model_cfg.max_len);
    let mle_curve = train_mle_with(&mut params, &mle_data, &cfg.mle, |_, _| {})?;

    let train_idf = idf_for(train.iter().map(|(s, _)| *s), cfg.role)?;
    let test_idf = idf_for(test.iter().map(|(s, _)| *s), cfg.role)?;
    let test_data = scst_examples(&test, cfg.role);
    let max_len = cfg.scst.max_len.min(model_cfg.max_len);
    let mle_cider = evaluate_greedy(&params, &test_data, &vocab, &test_idf, max_len)?;

    let scst_data = scst_examples(&train, cfg.role);
    let scst_log = scst_train_with(&mut params, &scst_data, &vocab, &train_idf, &cfg.scst, |_| {})?;
    let scst_cider = evaluate_greedy(&params, &test_data, &vocab, &test_idf, max_len)?;
    Ok(ExperimentResult { mle_curve, scst_log, mle_cider, scst_cider })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fid_vid_of_a_set_with_itself_is_zero() {
        let corpus = synth_corpus(&SynthConfig { n_clips: 30, ..SynthConfig::default() }).unwrap();
        assert_eq!(fid_vid(&corpus.clips, &corpus.clips).unwrap(), (0.0, 0.0));
        assert_eq!(stack_frames(&corpus.clips).unwrap().shape(), (240, 16));
        assert_eq!(pool_clips(&corpus.clips).unwrap().shape(), (30, 16));
        assert_eq!(fid_vid(&[], &corpus.clips), Err(MetricError::EmptyCorpus));
    }

    #[test]
    fn examples_are_bos_to_eos() {
        let corpus = synth_corpus(&SynthConfig { n_clips: 4, ..SynthConfig::default() }).unwrap();
        let pairs: Vec<_> = corpus.samples.iter().zip(&corpus.clips).collect();
        let vocab = Vocab::build(corpus.samples.iter().map(|s| &s.description), 1);
        for max_len in [24, 6] {
            for ex in train_examples::<f64>(&pairs, &vocab, Role::Description, max_len) {
                assert_eq!(ex.ids[0], crate::textproc::BOS);
                assert_eq!(*ex.ids.last().unwrap(), crate::textproc::EOS);
                assert!(ex.ids.len() <= max_len);
                assert_eq!(ex.features.shape(), (8, 16));
            }
        }
    }
}
