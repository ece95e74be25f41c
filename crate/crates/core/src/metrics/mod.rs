//! Caption metrics (BLEU-1..4, ROUGE-L, METEOR-lite, CIDEr-D) and the Fréchet distance
//! between Gaussian summaries of feature sets.

mod bleu;
mod cider;
mod frechet;
mod meteor;
mod rouge;

pub use bleu::{bleu_corpus, BleuStats};
pub use cider::{cider_corpus, cider_d, IdfTable, CIDER_SIGMA};
pub use frechet::{frechet_distance, gaussian_stats, GaussianStats};
pub use meteor::{meteor_lite, MeteorAlignment};
pub use rouge::{lcs_len, rouge_l, rouge_l_corpus, ROUGE_BETA};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textproc::Caption;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {hyps} hypotheses vs {refs} references")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("need at least 2 feature rows, got {0}")]
    TooFewSamples(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("role mismatch at pair {0}")]
    RoleMismatch(usize),
    #[error("BLEU order must be in 1..=4, got {0}")]
    BadOrder(usize),
}

/// One row of caption scores. BLEU/ROUGE-L/METEOR are fractions in `[0, 1]`; CIDEr-D is in `[0, 10]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreReport {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub cider_d: f64,
    /// Sentences scored; optional in serialized reports.
    #[serde(default)]
    pub counts: usize,
}

/// Scores aligned hypothesis/reference captions with every caption metric.
pub fn score_all(hyps: &[Caption], refs: &[Caption], idf: &IdfTable) -> Result<ScoreReport, MetricError> {
    if hyps.len() != refs.len() {
        return Err(MetricError::LengthMismatch { hyps: hyps.len(), refs: refs.len() });
    }
    if hyps.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    if let Some(i) = hyps.iter().zip(refs).position(|(h, r)| h.role != r.role) {
        return Err(MetricError::RoleMismatch(i));
    }
    let h: Vec<&[String]> = hyps.iter().map(|c| c.tokens.as_slice()).collect();
    let r: Vec<&[String]> = refs.iter().map(|c| c.tokens.as_slice()).collect();
    let n = h.len() as f64;
    let meteor = h.iter().zip(&r).map(|(a, b)| meteor_lite(a, b)).sum::<f64>() / n;
    Ok(ScoreReport {
        b1: bleu_corpus(&h, &r, 1)?,
        b2: bleu_corpus(&h, &r, 2)?,
        b3: bleu_corpus(&h, &r, 3)?,
        b4: bleu_corpus(&h, &r, 4)?,
        rouge_l: rouge_l_corpus(&h, &r, ROUGE_BETA)?,
        meteor,
        cider_d: cider_corpus(&h, &r, idf)?,
        counts: hyps.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::Role;

    fn caps(texts: &[&str]) -> Vec<Caption> {
        texts.iter().map(|t| Caption::new(*t, Role::Description)).collect()
    }

    #[test]
    fn identical_hypotheses_score_perfectly() {
        let refs = caps(&["the car brakes at the light", "a truck merges into the lane", "cyclist turns left at night"]);
        let idf = IdfTable::build(&refs.iter().map(|c| c.tokens.clone()).collect::<Vec<_>>()).unwrap();
        let r = score_all(&refs, &refs, &idf).unwrap();
        for b in [r.b1, r.b2, r.b3, r.b4, r.rouge_l] {
            assert!((b - 1.0).abs() < 1e-12);
        }
        assert_eq!(r.counts, 3);
    }

    #[test]
    fn disjoint_vocabulary_scores_zero() {
        let refs = caps(&["the car brakes", "a truck merges"]);
        let hyps = caps(&["x y z", "u v w"]);
        let idf = IdfTable::build(&refs.iter().map(|c| c.tokens.clone()).collect::<Vec<_>>()).unwrap();
        let r = score_all(&hyps, &refs, &idf).unwrap();
        assert_eq!([r.b1, r.b2, r.b3, r.b4, r.rouge_l, r.meteor, r.cider_d], [0.0; 7]);
    }

    #[test]
    fn mismatches_are_reported() {
        let refs = caps(&["a b"]);
        let idf = IdfTable::build(&[refs[0].tokens.clone()]).unwrap();
        assert_eq!(
            score_all(&caps(&["a", "b"]), &refs, &idf),
            Err(MetricError::LengthMismatch { hyps: 2, refs: 1 })
        );
        let avoid = vec![Caption::new("a b", Role::Avoidance)];
        assert_eq!(score_all(&avoid, &refs, &idf), Err(MetricError::RoleMismatch(0)));
    }

    #[test]
    fn report_json_is_flat_and_strict() {
        let r = ScoreReport { b1: 0.5, b2: 0.4, b3: 0.3, b4: 0.2, rouge_l: 0.6, meteor: 0.1, cider_d: 3.0, counts: 7 };
        let v: serde_json::Value = serde_json::to_value(r).unwrap();
        assert_eq!(v.as_object().unwrap().len(), 8);
        assert_eq!(serde_json::from_value::<ScoreReport>(v).unwrap(), r);
        assert!(serde_json::from_str::<ScoreReport>(r#"{"b1":0.1}"#).is_err());
    }
}
