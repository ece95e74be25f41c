use super::MetricError;

/// Recall weight used for reporting.
pub const ROUGE_BETA: f64 = 1.2;

/// Length of the longest common subsequence.
pub fn lcs_len<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Sentence ROUGE-L F-measure.
pub fn rouge_l<S: AsRef<str>>(hyp: &[S], reference: &[S], beta: f64) -> f64 {
    let l = lcs_len(hyp, reference) as f64;
    let p = if hyp.is_empty() { 0.0 } else { l / hyp.len() as f64 };
    let r = if reference.is_empty() { 0.0 } else { l / reference.len() as f64 };
    if p == 0.0 && r == 0.0 {
        return 0.0;
    }
    let b2 = beta * beta;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Mean sentence ROUGE-L.
pub fn rouge_l_corpus<S: AsRef<str>, H: AsRef<[S]>>(hyps: &[H], refs: &[H], beta: f64) -> Result<f64, MetricError> {
    if hyps.len() != refs.len() {
        return Err(MetricError::LengthMismatch { hyps: hyps.len(), refs: refs.len() });
    }
    if hyps.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let total: f64 = hyps.iter().zip(refs).map(|(h, r)| rouge_l(h.as_ref(), r.as_ref(), beta)).sum();
    Ok(total / hyps.len() as f64)
}
