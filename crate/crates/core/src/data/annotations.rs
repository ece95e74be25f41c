//! Accident annotations: parsing raw records and merging them into two-caption samples.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::DataError;
use crate::textproc::{Caption, Role};

/// Separator placed between the "texts" and "causes" parts of a description.
pub const MERGE_DELIMITER: &str = "; ";

const RAW_KEYS: [&str; 4] = ["id", "texts", "causes", "measures"];

/// One record as it appears in the source annotations. Absent fields are `None`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAnnotation {
    pub id: String,
    pub texts: Option<String>,
    pub causes: Option<String>,
    pub measures: Option<String>,
}

impl RawAnnotation {
    pub fn new(id: impl Into<String>, texts: &str, causes: &str, measures: &str) -> Self {
        Self { id: id.into(), texts: Some(texts.into()), causes: Some(causes.into()), measures: Some(measures.into()) }
    }

    fn from_object(line: usize, obj: &Map<String, Value>) -> Result<Self, DataError> {
        if let Some(k) = obj.keys().find(|k| !RAW_KEYS.contains(&k.as_str())) {
            return Err(DataError::UnknownField { line, field: k.clone() });
        }
        let text = |key: &str| -> Result<Option<String>, DataError> {
            match obj.get(key) {
                None => Ok(None),
                Some(Value::String(s)) => Ok(Some(s.clone())),
                Some(_) => Err(DataError::InvalidField { line, field: key.to_owned() }),
            }
        };
        let id = text("id")?.filter(|s| !s.is_empty()).ok_or(DataError::MissingId { line })?;
        Ok(Self { id, texts: text("texts")?, causes: text("causes")?, measures: text("measures")? })
    }
}

/// A clip with its description (action; cause) and avoidance captions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub id: String,
    pub description: Caption,
    pub avoidance: Caption,
    /// Relative path of the clip's feature file; empty until features are attached.
    pub features_path: String,
}

impl Sample {
    pub fn caption(&self, role: Role) -> &Caption {
        match role {
            Role::Description => &self.description,
            Role::Avoidance => &self.avoidance,
        }
    }
}

/// Serialized form of a restructured sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    pub description: String,
    pub avoidance: String,
}

impl From<&Sample> for SampleRecord {
    fn from(s: &Sample) -> Self {
        Self { id: s.id.clone(), description: s.description.raw.clone(), avoidance: s.avoidance.raw.clone() }
    }
}

impl SampleRecord {
    pub fn into_sample(self) -> Sample {
        Sample {
            description: Caption::new(self.description, Role::Description),
            avoidance: Caption::new(self.avoidance, Role::Avoidance),
            id: self.id,
            features_path: String::new(),
        }
    }
}

/// Result of [`restructure`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Restructured {
    pub samples: Vec<Sample>,
    /// Records whose `measures` was the empty string (kept, but worth a warning).
    pub empty_avoidance: usize,
}

/// Merges `texts` and `causes` into the description and carries `measures` over as the avoidance.
pub fn restructure(raw: &[RawAnnotation]) -> Result<Restructured, DataError> {
    let mut seen = HashSet::new();
    let mut samples = Vec::with_capacity(raw.len());
    let mut empty_avoidance = 0;
    for r in raw {
        if !seen.insert(r.id.as_str()) {
            return Err(DataError::DuplicateId(r.id.clone()));
        }
        let field = |v: &Option<String>, name: &str| {
            v.clone().ok_or_else(|| DataError::MissingField { id: r.id.clone(), field: name.to_owned() })
        };
        let texts = field(&r.texts, "texts")?;
        let causes = field(&r.causes, "causes")?;
        let measures = field(&r.measures, "measures")?;
        if measures.is_empty() {
            empty_avoidance += 1;
        }
        samples.push(Sample {
            id: r.id.clone(),
            description: Caption::new(format!("{texts}{MERGE_DELIMITER}{causes}"), Role::Description),
            avoidance: Caption::new(measures, Role::Avoidance),
            features_path: String::new(),
        });
    }
    Ok(Restructured { samples, empty_avoidance })
}

/// Parses JSON Lines of raw annotations. Blank lines are skipped; keys other than
/// `id`, `texts`, `causes`, `measures` are rejected.
pub fn read_raw_annotations(input: impl BufRead) -> Result<Vec<RawAnnotation>, DataError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| DataError::Json { line: line_no, source: e })?;
        let obj = value.as_object().ok_or(DataError::NotAnObject { line: line_no })?;
        out.push(RawAnnotation::from_object(line_no, obj)?);
    }
    Ok(out)
}

pub fn write_samples(samples: &[Sample], mut out: impl Write) -> Result<(), DataError> {
    for s in samples {
        serde_json::to_writer(&mut out, &SampleRecord::from(s)).map_err(|e| DataError::document("sample record", e))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_samples(input: impl BufRead) -> Result<Vec<Sample>, DataError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(&line).map_err(|e| DataError::Json { line: i + 1, source: e })?;
        if !seen.insert(rec.id.clone()) {
            return Err(DataError::DuplicateId(rec.id));
        }
        out.push(rec.into_sample());
    }
    Ok(out)
}
