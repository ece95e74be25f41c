use std::collections::BTreeMap;

use super::MetricError;
use crate::textproc::{ngrams, Gram, NGramCounts, MAX_ORDER};

/// Width of the Gaussian length penalty.
pub const CIDER_SIGMA: f64 = 6.0;

/// Document frequencies of every n-gram (orders 1..=4) over a reference corpus.
///
/// Frozen once built; scoring only reads it.
#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable {
    doc_count: usize,
    df: Vec<BTreeMap<Gram, usize>>,
}

impl IdfTable {
    pub fn build<S: AsRef<str>, D: AsRef<[S]>>(refs: &[D]) -> Result<Self, MetricError> {
        if refs.is_empty() {
            return Err(MetricError::EmptyCorpus);
        }
        let mut df = vec![BTreeMap::new(); MAX_ORDER];
        for doc in refs {
            let counts = ngrams(doc.as_ref(), MAX_ORDER);
            for (n, table) in df.iter_mut().enumerate() {
                for gram in counts.order(n + 1).keys() {
                    *table.entry(gram.clone()).or_insert(0usize) += 1;
                }
            }
        }
        Ok(Self { doc_count: refs.len(), df })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    /// Number of reference documents containing `gram`; 0 when absent.
    pub fn df<S: AsRef<str>>(&self, gram: &[S]) -> usize {
        if gram.is_empty() || gram.len() > MAX_ORDER {
            return 0;
        }
        let key: Gram = gram.iter().map(|s| s.as_ref().to_owned()).collect();
        self.df[gram.len() - 1].get(&key).copied().unwrap_or(0)
    }

    fn weight(&self, n: usize, gram: &Gram) -> f64 {
        match self.df[n - 1].get(gram) {
            Some(&df) if df > 0 => (self.doc_count as f64 / df as f64).ln(),
            _ => 0.0,
        }
    }

    /// Iterator over `(order, gram, df)`, for inspection.
    pub fn entries(&self) -> impl Iterator<Item = (usize, &Gram, usize)> {
        self.df.iter().enumerate().flat_map(|(i, m)| m.iter().map(move |(g, &d)| (i + 1, g, d)))
    }
}

fn order_similarity(idf: &IdfTable, n: usize, hyp: &NGramCounts, reference: &NGramCounts) -> f64 {
    let h = hyp.order(n);
    let r = reference.order(n);
    let mut dot = 0.0;
    let mut norm_h = 0.0;
    let mut norm_r = 0.0;
    for (gram, &c) in h {
        let v = c as f64 * idf.weight(n, gram);
        norm_h += v * v;
        if let Some(&rc) = r.get(gram) {
            let w = idf.weight(n, gram);
            dot += (c.min(rc) as f64 * w) * (rc as f64 * w);
        }
    }
    for (gram, &c) in r {
        let v = c as f64 * idf.weight(n, gram);
        norm_r += v * v;
    }
    if norm_h == 0.0 || norm_r == 0.0 {
        return 0.0;
    }
    (dot / (norm_h.sqrt() * norm_r.sqrt())).max(0.0)
}

/// Sentence CIDEr-D against a single reference, in `[0, 10]`.
///
/// Each order compares TF-IDF vectors; hypothesis counts are clipped to the reference
/// counts in the inner product, while norms use the raw vectors. N-grams absent from
/// the reference corpus weigh nothing. A Gaussian penalty of width `sigma` on the length
/// difference scales the mean over orders 1..=4.
pub fn cider_d<S: AsRef<str>>(hyp: &[S], reference: &[S], idf: &IdfTable, sigma: f64) -> f64 {
    let h = ngrams(hyp, MAX_ORDER);
    let r = ngrams(reference, MAX_ORDER);
    let sims: f64 = (1..=MAX_ORDER).map(|n| order_similarity(idf, n, &h, &r)).sum();
    let delta = hyp.len() as f64 - reference.len() as f64;
    let penalty = (-(delta * delta) / (2.0 * sigma * sigma)).exp();
    10.0 * penalty * sims / MAX_ORDER as f64
}

/// Mean sentence CIDEr-D.
pub fn cider_corpus<S: AsRef<str>, H: AsRef<[S]>>(hyps: &[H], refs: &[H], idf: &IdfTable) -> Result<f64, MetricError> {
    if hyps.len() != refs.len() {
        return Err(MetricError::LengthMismatch { hyps: hyps.len(), refs: refs.len() });
    }
    if hyps.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let total: f64 = hyps.iter().zip(refs).map(|(h, r)| cider_d(h.as_ref(), r.as_ref(), idf, CIDER_SIGMA)).sum();
    Ok(total / hyps.len() as f64)
}
