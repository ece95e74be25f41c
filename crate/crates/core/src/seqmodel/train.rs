use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::xent_loss;
use super::model::{backward, forward_train};
use super::params::{Gradients, ModelParams};
use super::ModelError;
use crate::seed::derive_seed;
use crate::tensor::Matrix;
use crate::Scalar;

/// One training pair: clip features and the target id sequence `[BOS, .., EOS]` (no padding).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample<T> {
    pub id: String,
    pub features: Matrix<T>,
    pub ids: Vec<usize>,
}

/// Teacher-forced training schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct MleConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self { epochs: 30, batch_size: 8, seed: 0, adam: AdamConfig::default() }
    }
}

/// Teacher-forced per-token cross-entropy of one example and its parameter gradient.
pub fn sequence_xent<T: Scalar>(params: &ModelParams<T>, example: &TrainExample<T>) -> Result<(T, Gradients<T>), ModelError> {
    if example.ids.len() < 2 {
        return Err(ModelError::BadPrefix(format!("example {} has fewer than two ids", example.id)));
    }
    let inputs = &example.ids[..example.ids.len() - 1];
    let targets = &example.ids[1..];
    let trace = forward_train(params, &example.features, inputs)?;
    let mask = vec![1u8; targets.len()];
    let (loss, dlogits) = xent_loss(trace.logits(), targets, &mask)?;
    Ok((loss, backward(&trace, dlogits)))
}

/// Mini-batch maximum-likelihood training with Adam. Returns the mean per-sequence loss of each epoch.
///
/// Batches are drawn from a per-epoch shuffle seeded from `cfg.seed`; each batch's gradient is the
/// mean of its sequences' gradients.
pub fn train_mle<T: Scalar>(
    params: &mut ModelParams<T>,
    dataset: &[TrainExample<T>],
    cfg: &MleConfig,
) -> Result<Vec<f64>, ModelError> {
    train_mle_with(params, dataset, cfg, |_, _| {})
}

/// [`train_mle`] with a callback invoked after every epoch with `(epoch, mean_loss)`.
pub fn train_mle_with<T: Scalar>(
    params: &mut ModelParams<T>,
    dataset: &[TrainExample<T>],
    cfg: &MleConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>, ModelError> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let batch_size = cfg.batch_size.max(1);
    let mut state = AdamState::new(params);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["mle".into(), epoch.into()]));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(batch_size) {
            let mut acc = Gradients::zeros_like(params);
            for &i in batch {
                let (loss, g) = sequence_xent(params, &dataset[i])?;
                total += loss.as_f64();
                acc.add_assign(&g);
            }
            acc.scale(T::one() / T::from_usize(batch.len()).expect("batch fits"));
            adam_step(params, &acc, &mut state, &cfg.adam);
        }
        let mean = total / dataset.len() as f64;
        if !mean.is_finite() {
            return Err(ModelError::NonFiniteLoss { epoch });
        }
        curve.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqmodel::ModelConfig;
    use crate::textproc::{BOS, EOS};

    fn tiny() -> (ModelParams<f64>, Vec<TrainExample<f64>>) {
        let cfg = ModelConfig { d_model: 16, n_heads: 2, vocab_size: 8, max_len: 8, feature_dim: 3, seed: 11 };
        let params = ModelParams::init(&cfg).unwrap();
        let data = (0..4)
            .map(|k| TrainExample {
                id: format!("c{k}"),
                features: Matrix::from_vec(2, 3, vec![k as f64, 1.0, 0.0, 0.5, -(k as f64), 1.0]),
                ids: vec![BOS, 4 + k % 4, 5, EOS],
            })
            .collect();
        (params, data)
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let (mut p, data) = tiny();
        let before = p.clone();
        let curve = train_mle(&mut p, &data, &MleConfig { epochs: 0, ..MleConfig::default() }).unwrap();
        assert!(curve.is_empty());
        assert_eq!(p, before);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let (mut p, _) = tiny();
        assert_eq!(train_mle(&mut p, &[], &MleConfig::default()), Err(ModelError::EmptyDataset));
    }

    #[test]
    fn same_seed_same_curve() {
        let cfg = MleConfig { epochs: 3, batch_size: 2, seed: 9, ..MleConfig::default() };
        let (mut a, data) = tiny();
        let (mut b, _) = tiny();
        let ca = train_mle(&mut a, &data, &cfg).unwrap();
        let cb = train_mle(&mut b, &data, &cfg).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a, b);
    }

    #[test]
    fn single_example_is_memorized() {
        let (_, data) = tiny();
        let mut p = ModelParams::init(&ModelConfig { max_len: 8, ..ModelConfig::new(8, 3, 11) }).unwrap();
        let cfg = MleConfig { epochs: 50, batch_size: 1, seed: 1, ..MleConfig::default() };
        let curve = train_mle(&mut p, &data[..1], &cfg).unwrap();
        assert!(*curve.last().unwrap() < 0.1, "final loss {:?}", curve.last());
    }
}
