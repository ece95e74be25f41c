//! Dataset handling: annotation restructuring, clip feature files, caption files, the
//! synthetic accident corpus and dataset validation.

mod annotations;
mod corpus;
mod features;
mod synth;
mod validate;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use annotations::{
    read_raw_annotations, read_samples, restructure, write_samples, RawAnnotation, Restructured, Sample, SampleRecord,
    MERGE_DELIMITER,
};
pub use corpus::{load_corpus, write_corpus, Corpus, CORPUS_FILES};
pub use features::{read_features, write_features, FeatureClip, FeatureError, MAGIC, VERSION};
pub use synth::{perturb, synth_corpus, SynthConfig, SynthCorpus, Template, ACTIONS, ACTORS, CAUSES, EVENT_WORDS, GLUE_WORDS, SCENES, SIGNAL_DIM};
pub use validate::{validate_dataset, ValidationReport};

use crate::textproc::Role;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: invalid JSON: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("{what}: {source}")]
    Document { what: String, source: serde_json::Error },
    #[error("line {line}: expected a JSON object")]
    NotAnObject { line: usize },
    #[error("line {line}: unknown field {field:?}")]
    UnknownField { line: usize, field: String },
    #[error("line {line}: field {field:?} must be a string")]
    InvalidField { line: usize, field: String },
    #[error("line {line}: missing or empty id")]
    MissingId { line: usize },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("record {id:?} is missing field {field:?}")]
    MissingField { id: String, field: String },
    #[error("no entry for id {0:?}")]
    UnknownId(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Feature { path: String, source: FeatureError },
}

impl DataError {
    fn document(what: impl fmt::Display, source: serde_json::Error) -> Self {
        Self::Document { what: what.to_string(), source }
    }
}

/// Maps clip id to a feature file path relative to the index's directory.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureIndex(pub BTreeMap<String, String>);

impl FeatureIndex {
    pub fn get(&self, id: &str) -> Option<&str> {
        self.0.get(id).map(String::as_str)
    }

    pub fn insert(&mut self, id: impl Into<String>, rel_path: impl Into<String>) {
        self.0.insert(id.into(), rel_path.into());
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Absolute location of `id`'s file given the directory holding the index.
    pub fn resolve(&self, base: &Path, id: &str) -> Option<PathBuf> {
        self.get(id).map(|p| base.join(p))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| DataError::document(path.display(), e))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| DataError::document(path.display(), e))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    /// Reads every clip in id order, resolving paths against `base`.
    pub fn load_all(&self, base: &Path) -> Result<Vec<FeatureClip>, DataError> {
        self.iter()
            .map(|(id, rel)| {
                let path = base.join(rel);
                read_features(&path).map_err(|source| DataError::Feature { path: path.display().to_string(), source })
                    .and_then(|clip| if clip.id == id { Ok(clip) } else { Err(DataError::UnknownId(clip.id)) })
            })
            .collect()
    }
}

/// One caption line of a hypothesis or reference file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionRecord {
    pub id: String,
    pub role: Role,
    pub text: String,
}

pub fn write_captions(records: &[CaptionRecord], mut out: impl Write) -> Result<(), DataError> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| DataError::document("caption record", e))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads caption JSON Lines; an `(id, role)` pair may appear only once.
pub fn read_captions(input: impl BufRead) -> Result<Vec<CaptionRecord>, DataError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CaptionRecord = serde_json::from_str(&line).map_err(|e| DataError::Json { line: i + 1, source: e })?;
        if !seen.insert((rec.id.clone(), rec.role)) {
            return Err(DataError::DuplicateId(format!("{}/{}", rec.id, rec.role)));
        }
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(DataError::InvalidConfig(format!("unknown split {other:?}"))),
        }
    }
}

/// Clip ids per split.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Splits {
    pub fn ids(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caption_records_round_trip() {
        let recs = vec![
            CaptionRecord { id: "a".into(), role: Role::Description, text: "x y".into() },
            CaptionRecord { id: "a".into(), role: Role::Avoidance, text: "z".into() },
        ];
        let mut buf = Vec::new();
        write_captions(&recs, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with(r#"{"id":"a","role":"description","text":"x y"}"#));
        assert_eq!(read_captions(buf.as_slice()).unwrap(), recs);

        let dup = [recs[0].clone(), recs[0].clone()];
        let mut buf = Vec::new();
        write_captions(&dup, &mut buf).unwrap();
        assert!(matches!(read_captions(buf.as_slice()), Err(DataError::DuplicateId(_))));
        assert!(read_captions(r#"{"id":"a","role":"both","text":""}"#.as_bytes()).is_err());
    }

    #[test]
    fn split_names() {
        for s in Split::ALL {
            assert_eq!(s.to_string().parse::<Split>().unwrap(), s);
        }
        assert!("dev".parse::<Split>().is_err());
    }

    #[test]
    fn index_json_is_a_flat_object() {
        let mut idx = FeatureIndex::default();
        idx.insert("b", "features/b.avdf");
        idx.insert("a", "features/a.avdf");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.json");
        idx.write(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(v["a"], "features/a.avdf");
        assert_eq!(FeatureIndex::read(&path).unwrap(), idx);
        assert_eq!(idx.resolve(dir.path(), "b").unwrap(), dir.path().join("features/b.avdf"));
    }
}
