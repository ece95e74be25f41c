use std::path::Path;

use serde::{Deserialize, Serialize};

use super::annotations::Sample;
use super::features::{read_features, FeatureError};
use super::FeatureIndex;

/// Findings of [`validate_dataset`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub samples: usize,
    /// Samples with no index entry or whose feature file does not exist.
    pub missing_features: usize,
    /// Feature files that exist but fail to parse for a reason other than a non-finite value.
    pub unreadable_features: usize,
    pub non_finite_features: usize,
    /// Empty description or avoidance captions (a warning only).
    pub empty_captions: usize,
}

impl ValidationReport {
    /// Missing, unreadable or non-finite features fail validation; empty captions do not.
    pub fn passed(&self) -> bool {
        self.missing_features == 0 && self.unreadable_features == 0 && self.non_finite_features == 0
    }
}

/// Checks every sample's captions and feature file. `base` is the directory the index paths are relative to.
pub fn validate_dataset(samples: &[Sample], index: &FeatureIndex, base: &Path) -> ValidationReport {
    let mut report = ValidationReport { samples: samples.len(), ..ValidationReport::default() };
    for s in samples {
        report.empty_captions += usize::from(s.description.raw.trim().is_empty());
        report.empty_captions += usize::from(s.avoidance.raw.trim().is_empty());
        let Some(path) = index.resolve(base, &s.id) else {
            report.missing_features += 1;
            continue;
        };
        if !path.is_file() {
            report.missing_features += 1;
            continue;
        }
        match read_features(&path) {
            Ok(_) => {}
            Err(FeatureError::NonFiniteValue(_)) => report.non_finite_features += 1,
            Err(_) => report.unreadable_features += 1,
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_corpus, write_corpus, SynthConfig};

    fn corpus_dir() -> (tempfile::TempDir, crate::data::SynthCorpus) {
        let c = synth_corpus(&SynthConfig { n_clips: 10, seed: 1, ..SynthConfig::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&c, dir.path()).unwrap();
        (dir, c)
    }

    #[test]
    fn consistent_corpus_is_clean() {
        let (dir, c) = corpus_dir();
        let r = validate_dataset(&c.samples, &c.index, dir.path());
        assert_eq!(r, ValidationReport { samples: 10, ..ValidationReport::default() });
        assert!(r.passed());
    }

    #[test]
    fn deleted_file_is_missing() {
        let (dir, c) = corpus_dir();
        std::fs::remove_file(dir.path().join(c.index.get("clip0003").unwrap())).unwrap();
        let r = validate_dataset(&c.samples, &c.index, dir.path());
        assert_eq!(r.missing_features, 1);
        assert!(!r.passed());
    }

    #[test]
    fn injected_nan_is_counted() {
        let (dir, c) = corpus_dir();
        let path = dir.path().join(c.index.get("clip0005").unwrap());
        let mut bytes = std::fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        let r = validate_dataset(&c.samples, &c.index, dir.path());
        assert_eq!((r.non_finite_features, r.missing_features, r.unreadable_features), (1, 0, 0));
    }

    #[test]
    fn empty_captions_warn_without_failing() {
        let (dir, mut c) = corpus_dir();
        c.samples[0].avoidance = crate::textproc::Caption::new("", crate::textproc::Role::Avoidance);
        let r = validate_dataset(&c.samples, &c.index, dir.path());
        assert_eq!(r.empty_captions, 1);
        assert!(r.passed());
    }

    #[test]
    fn garbage_file_is_unreadable() {
        let (dir, c) = corpus_dir();
        std::fs::write(dir.path().join(c.index.get("clip0000").unwrap()), b"nope").unwrap();
        assert_eq!(validate_dataset(&c.samples, &c.index, dir.path()).unreadable_features, 1);
    }
}
