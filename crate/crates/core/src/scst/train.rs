use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::decode::{decode_greedy, decode_sample, DecodeOutput};
use super::reward::{compute_rewards, scst_loss};
use super::{ScstBatchStats, ScstError};
use crate::metrics::{cider_d, IdfTable, CIDER_SIGMA};
use crate::seed::derive_seed;
use crate::seqmodel::tape::softmax_into;
use crate::seqmodel::{adam_step, backward, forward_train, AdamConfig, AdamState, Gradients, ModelParams};
use crate::tensor::Matrix;
use crate::textproc::{Caption, Vocab};
use crate::Scalar;

/// One clip with the reference caption its rollouts are scored against.
#[derive(Debug, Clone, PartialEq)]
pub struct ScstExample<T> {
    pub id: String,
    pub features: Matrix<T>,
    pub reference: Caption,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScstConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Sampling temperature of the rollouts.
    pub temperature: f64,
    /// Longest decoded sequence, BOS included.
    pub max_len: usize,
    pub adam: AdamConfig,
}

impl Default for ScstConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 8,
            seed: 0,
            temperature: 1.0,
            max_len: 24,
            adam: AdamConfig { lr: 5e-5, ..AdamConfig::default() },
        }
    }
}

/// Parameter gradient given `dlogp[t] = ∂L/∂logp[t]` for a rollout whose ids are held fixed.
///
/// The rollout is re-scored by a teacher-forced pass over its own ids, so
/// `∂L/∂logits[t−1] = dlogp[t] · (onehot(ids[t]) − softmax(logits[t−1]))`. Position 0 (BOS)
/// has no parameters behind it.
pub fn rollout_backward<T: Scalar>(
    params: &ModelParams<T>,
    features: &Matrix<T>,
    rollout: &DecodeOutput<T>,
    dlogp: &[T],
) -> Result<Gradients<T>, ScstError> {
    if dlogp.len() != rollout.len() {
        return Err(ScstError::LengthMismatch(format!("rollout {}, gradient {}", rollout.len(), dlogp.len())));
    }
    if rollout.len() < 2 || dlogp[1..].iter().all(|&g| g == T::zero()) {
        return Ok(Gradients::zeros_like(params));
    }
    let inputs = &rollout.ids[..rollout.len() - 1];
    let trace = forward_train(params, features, inputs)?;
    let logits = trace.logits();
    let mut dlogits = Matrix::zeros(logits.rows(), logits.cols());
    let mut probs = vec![T::zero(); logits.cols()];
    for t in 1..rollout.len() {
        let g = dlogp[t];
        if g == T::zero() {
            continue;
        }
        softmax_into(logits.row(t - 1), &mut probs);
        let row = dlogits.row_mut(t - 1);
        for (d, &p) in row.iter_mut().zip(&probs) {
            *d = -g * p;
        }
        row[rollout.ids[t]] += g;
    }
    Ok(backward(&trace, dlogits))
}

/// [`scst_loss`] of a single rollout and its parameter gradient.
pub fn rollout_gradient<T: Scalar>(
    params: &ModelParams<T>,
    features: &Matrix<T>,
    rollout: &DecodeOutput<T>,
    rewards: &[T],
) -> Result<(T, Gradients<T>), ScstError> {
    let (loss, dlogp) = scst_loss(&rollout.logp, rewards, &rollout.mask)?;
    Ok((loss, rollout_backward(params, features, rollout, &dlogp)?))
}

/// Mean sentence CIDEr-D of greedy decodes against each example's reference.
pub fn evaluate_greedy<T: Scalar>(
    params: &ModelParams<T>,
    examples: &[ScstExample<T>],
    vocab: &Vocab,
    idf: &IdfTable,
    max_len: usize,
) -> Result<f64, ScstError> {
    if examples.is_empty() {
        return Err(ScstError::EmptyDataset);
    }
    let mut total = 0.0;
    for ex in examples {
        let out = decode_greedy(params, &ex.features, max_len)?;
        total += cider_d(&out.tokens(vocab), &ex.reference.tokens, idf, CIDER_SIGMA);
    }
    Ok(total / examples.len() as f64)
}

pub fn scst_train<T: Scalar>(
    params: &mut ModelParams<T>,
    dataset: &[ScstExample<T>],
    vocab: &Vocab,
    idf: &IdfTable,
    cfg: &ScstConfig,
) -> Result<Vec<ScstBatchStats>, ScstError> {
    scst_train_with(params, dataset, vocab, idf, cfg, |_| {})
}

/// Self-critical training with Adam, calling `on_epoch` after each epoch.
///
/// Every sequence gets a greedy baseline and one rollout seeded by `(seed, id, epoch)`. A
/// batch's rollouts form one [`scst_loss`], normalized by the unmasked tokens of the whole batch.
pub fn scst_train_with<T: Scalar>(
    params: &mut ModelParams<T>,
    dataset: &[ScstExample<T>],
    vocab: &Vocab,
    idf: &IdfTable,
    cfg: &ScstConfig,
    mut on_epoch: impl FnMut(&ScstBatchStats),
) -> Result<Vec<ScstBatchStats>, ScstError> {
    if dataset.is_empty() {
        return Err(ScstError::EmptyDataset);
    }
    if !(cfg.temperature > 0.0 && cfg.temperature.is_finite()) {
        return Err(ScstError::InvalidTemperature(cfg.temperature));
    }
    let batch_size = cfg.batch_size.max(1);
    let mut state = AdamState::new(params);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["scst-order".into(), epoch.into()])));
        let (mut baseline, mut sample, mut reward, mut loss) = (0.0, 0.0, 0.0, 0.0);
        for batch in order.chunks(batch_size) {
            // the whole batch is one loss: its rollouts are concatenated, so N counts every
            // unmasked token in the batch
            let mut rollouts = Vec::with_capacity(batch.len());
            let (mut logp, mut rewards, mut mask) = (Vec::new(), Vec::new(), Vec::new());
            for &i in batch {
                let ex = &dataset[i];
                let greedy = decode_greedy(params, &ex.features, cfg.max_len)?;
                let seed = derive_seed(cfg.seed, &["scst".into(), ex.id.as_str().into(), epoch.into()]);
                let rollout = decode_sample(params, &ex.features, cfg.max_len, seed, cfg.temperature)?;
                let r = compute_rewards(&rollout, &greedy, &ex.reference, vocab, idf);
                baseline += r.baseline_score;
                sample += r.sample_score;
                reward += r.advantage();
                logp.extend_from_slice(&rollout.logp);
                rewards.extend(r.as_scalars::<T>());
                mask.extend_from_slice(&rollout.mask);
                rollouts.push((i, rollout));
            }
            let (l, dlogp) = scst_loss(&logp, &rewards, &mask)?;
            loss += l.as_f64() * batch.len() as f64;
            let mut acc = Gradients::zeros_like(params);
            let mut offset = 0;
            for (i, rollout) in &rollouts {
                let g = rollout_backward(params, &dataset[*i].features, rollout, &dlogp[offset..offset + rollout.len()])?;
                offset += rollout.len();
                acc.add_assign(&g);
            }
            adam_step(params, &acc, &mut state, &cfg.adam);
        }
        let n = dataset.len() as f64;
        let stats = ScstBatchStats {
            epoch,
            mean_reward: reward / n,
            mean_baseline: baseline / n,
            mean_sample: sample / n,
            loss: loss / n,
            sequences: dataset.len(),
        };
        if !stats.loss.is_finite() || !params.is_finite() {
            return Err(ScstError::NonFiniteLoss { epoch });
        }
        on_epoch(&stats);
        log.push(stats);
    }
    Ok(log)
}
