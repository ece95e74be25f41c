use std::collections::BTreeMap;

use super::MetricError;
use crate::textproc::{ngrams, Gram};

/// Pooled clipped n-gram statistics for corpus BLEU.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BleuStats {
    /// Clipped matches per order (index 0 = unigrams).
    pub matches: [usize; 4],
    /// Hypothesis n-gram totals per order.
    pub totals: [usize; 4],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn accumulate<S: AsRef<str>>(&mut self, hyp: &[S], reference: &[S]) {
        let h = ngrams(hyp, 4);
        let r = ngrams(reference, 4);
        for n in 1..=4 {
            let ref_counts: &BTreeMap<Gram, usize> = r.order(n);
            for (gram, &c) in h.order(n) {
                self.matches[n - 1] += c.min(ref_counts.get(gram).copied().unwrap_or(0));
                self.totals[n - 1] += c;
            }
        }
        self.hyp_len += hyp.len();
        self.ref_len += reference.len();
    }

    /// BLEU-`n` from the pooled counts; 0 when any precision up to `n` is 0.
    pub fn score(&self, n: usize) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for k in 0..n {
            if self.matches[k] == 0 || self.totals[k] == 0 {
                return 0.0;
            }
            log_sum += (self.matches[k] as f64 / self.totals[k] as f64).ln();
        }
        let bp = (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp().min(1.0);
        bp * (log_sum / n as f64).exp()
    }
}

/// Corpus-level BLEU-`n` with one reference per hypothesis and no smoothing.
pub fn bleu_corpus<S: AsRef<str>, H: AsRef<[S]>>(hyps: &[H], refs: &[H], n: usize) -> Result<f64, MetricError> {
    if !(1..=4).contains(&n) {
        return Err(MetricError::BadOrder(n));
    }
    if hyps.len() != refs.len() {
        return Err(MetricError::LengthMismatch { hyps: hyps.len(), refs: refs.len() });
    }
    if hyps.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let mut stats = BleuStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        stats.accumulate(h.as_ref(), r.as_ref());
    }
    Ok(stats.score(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    #[test]
    fn identical_text_is_one() {
        assert_eq!(bleu_corpus(&[t("a car stops")], &[t("a car stops")], 1).unwrap(), 1.0);
    }

    #[test]
    fn clipped_unigram_precision() {
        let s = bleu_corpus(&[t("the the the")], &[t("the cat")], 1).unwrap();
        assert!((s - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_hypothesis_is_zero() {
        assert_eq!(bleu_corpus(&[t("")], &[t("a")], 1).unwrap(), 0.0);
    }

    #[test]
    fn brevity_penalty_applies_to_short_hypotheses() {
        // p1 = 1, hyp_len 2 < ref_len 4 -> exp(1 - 2)
        let s = bleu_corpus(&[t("a b")], &[t("a b c d")], 1).unwrap();
        assert!((s - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn zero_higher_order_precision_zeroes_the_score() {
        assert_eq!(bleu_corpus(&[t("b a c d")], &[t("a b d c")], 2).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert_eq!(bleu_corpus(&[t("a")], &[], 1), Err(MetricError::LengthMismatch { hyps: 1, refs: 0 }));
        assert_eq!(bleu_corpus(&[t("a")], &[t("a")], 5), Err(MetricError::BadOrder(5)));
    }

    proptest! {
        #[test]
        fn repetition_is_clipped(k in 1usize..10, ref_count in 0usize..4, extra in prop::collection::vec("[x-z]", 0..4)) {
            let hyp = vec!["a".to_string(); k];
            let mut reference = vec!["a".to_string(); ref_count];
            reference.extend(extra);
            let mut st = BleuStats::default();
            st.accumulate(&hyp, &reference);
            let p1 = st.matches[0] as f64 / st.totals[0] as f64;
            prop_assert!(p1 <= ref_count as f64 / k as f64 + 1e-12);
        }

        #[test]
        fn in_unit_interval(h in prop::collection::vec("[a-d]", 0..10), r in prop::collection::vec("[a-d]", 0..10), n in 1usize..=4) {
            let s = bleu_corpus(&[h], &[r], n).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }
}
