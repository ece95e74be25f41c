use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ScstError;
use crate::seqmodel::tape::log_softmax;
use crate::seqmodel::{ModelParams, StepDecoder};
use crate::tensor::Matrix;
use crate::textproc::{Vocab, BOS, EOS};
use crate::Scalar;

/// A generated sequence: `ids` starts with BOS; `logp[t]` is the log-probability of `ids[t]`
/// given `ids[..t]` (0 for BOS); `mask[t]` is 1 up to and including EOS.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput<T> {
    pub ids: Vec<usize>,
    pub logp: Vec<T>,
    pub mask: Vec<u8>,
}

impl<T: Scalar> DecodeOutput<T> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Words of the sequence, without BOS/EOS/PAD.
    pub fn tokens(&self, vocab: &Vocab) -> Vec<String> {
        vocab.decode(&self.ids)
    }

    pub fn text(&self, vocab: &Vocab) -> String {
        self.tokens(vocab).join(" ")
    }

    /// Sum of the unmasked log-probabilities.
    pub fn total_logp(&self) -> T {
        self.logp.iter().zip(&self.mask).filter(|(_, &m)| m != 0).map(|(&l, _)| l).sum()
    }
}

/// Lowest index among the maximal entries.
pub(crate) fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Draws an index from `softmax(row / temperature)`.
pub(crate) fn sample_index<T: Scalar>(row: &[T], temperature: f64, rng: &mut impl Rng) -> usize {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
    let weights: Vec<f64> = row.iter().map(|v| ((v.as_f64() - max) / temperature).exp()).collect();
    // the maximal entry always has weight 1, so the weights are valid
    WeightedIndex::new(&weights).expect("nonzero weights").sample(rng)
}

fn decode<T: Scalar>(
    params: &ModelParams<T>,
    features: &Matrix<T>,
    max_len: usize,
    mut choose: impl FnMut(&[T]) -> usize,
) -> Result<DecodeOutput<T>, ScstError> {
    let limit = max_len.min(params.config().max_len).max(1);
    let mut dec = StepDecoder::new(params, features)?;
    let mut out = DecodeOutput { ids: vec![BOS], logp: vec![T::zero()], mask: vec![1] };
    while out.ids.len() < limit {
        let logits = dec.step(*out.ids.last().expect("starts with BOS"))?;
        let next = choose(&logits);
        out.ids.push(next);
        out.logp.push(log_softmax(&logits)[next]);
        out.mask.push(1);
        if next == EOS {
            break;
        }
    }
    Ok(out)
}

/// Argmax decoding (ties go to the lowest id) until EOS or `max_len` ids, BOS included.
pub fn decode_greedy<T: Scalar>(params: &ModelParams<T>, features: &Matrix<T>, max_len: usize) -> Result<DecodeOutput<T>, ScstError> {
    decode(params, features, max_len, argmax)
}

/// Ancestral sampling from `softmax(logits / temperature)`. `logp` is recorded under the
/// untempered distribution.
pub fn decode_sample<T: Scalar>(
    params: &ModelParams<T>,
    features: &Matrix<T>,
    max_len: usize,
    seed: u64,
    temperature: f64,
) -> Result<DecodeOutput<T>, ScstError> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(ScstError::InvalidTemperature(temperature));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    decode(params, features, max_len, |row| sample_index(row, temperature, &mut rng))
}
