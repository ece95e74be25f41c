//! On-disk corpus directory.
//!
//! ```text
//! annotations.jsonl   raw {"id","texts","causes","measures"}
//! samples.jsonl       restructured {"id","description","avoidance"}
//! references.jsonl    {"id","role","text"}, both roles per clip
//! features.json       id -> features/<id>.avdf
//! features/           one feature file per clip
//! splits.json         {"train":[..],"val":[..],"test":[..]}
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::annotations::{read_samples, write_samples, Sample};
use super::features::{read_features, write_features, FeatureClip};
use super::synth::SynthCorpus;
use super::{write_captions, CaptionRecord, DataError, FeatureIndex, Split, Splits};
use crate::textproc::Role;

pub const CORPUS_FILES: [&str; 5] =
    ["annotations.jsonl", "samples.jsonl", "references.jsonl", "features.json", "splits.json"];

/// A corpus directory loaded back from disk (features are read lazily).
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub samples: Vec<Sample>,
    pub index: FeatureIndex,
    pub splits: Splits,
}

impl Corpus {
    /// Samples of one split, in split order.
    pub fn split(&self, split: Split) -> Result<Vec<&Sample>, DataError> {
        self.splits
            .ids(split)
            .iter()
            .map(|id| self.samples.iter().find(|s| &s.id == id).ok_or_else(|| DataError::UnknownId(id.clone())))
            .collect()
    }

    pub fn features(&self, id: &str) -> Result<FeatureClip, DataError> {
        let path = self.index.resolve(&self.root, id).ok_or_else(|| DataError::UnknownId(id.to_owned()))?;
        read_features(&path).map_err(|source| DataError::Feature { path: path.display().to_string(), source })
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, DataError> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_corpus(corpus: &SynthCorpus, dir: impl AsRef<Path>) -> Result<(), DataError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("features"))?;

    let mut out = create(&dir.join("annotations.jsonl"))?;
    for r in &corpus.raw {
        serde_json::to_writer(&mut out, r).map_err(|e| DataError::Document { what: "annotation".into(), source: e })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;

    let mut out = create(&dir.join("samples.jsonl"))?;
    write_samples(&corpus.samples, &mut out)?;
    out.flush()?;

    let refs: Vec<CaptionRecord> = corpus
        .samples
        .iter()
        .flat_map(|s| {
            [Role::Description, Role::Avoidance].map(|role| CaptionRecord {
                id: s.id.clone(),
                role,
                text: s.caption(role).raw.clone(),
            })
        })
        .collect();
    let mut out = create(&dir.join("references.jsonl"))?;
    write_captions(&refs, &mut out)?;
    out.flush()?;

    for clip in &corpus.clips {
        let rel = corpus.index.get(&clip.id).ok_or_else(|| DataError::UnknownId(clip.id.clone()))?;
        let path = dir.join(rel);
        write_features(clip, &path).map_err(|source| DataError::Feature { path: path.display().to_string(), source })?;
    }
    corpus.index.write(dir.join("features.json"))?;

    let splits = serde_json::to_string_pretty(&corpus.splits)
        .map_err(|e| DataError::Document { what: "splits".into(), source: e })?;
    fs::write(dir.join("splits.json"), splits + "\n")?;
    Ok(())
}

/// Reads samples, the feature index and the splits of a corpus directory.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus, DataError> {
    let root = dir.as_ref().to_path_buf();
    let mut samples = read_samples(BufReader::new(File::open(root.join("samples.jsonl"))?))?;
    let index = FeatureIndex::read(root.join("features.json"))?;
    for s in &mut samples {
        if let Some(p) = index.get(&s.id) {
            s.features_path = p.to_owned();
        }
    }
    let text = fs::read_to_string(root.join("splits.json"))?;
    let splits: Splits = serde_json::from_str(&text).map_err(|e| DataError::Document { what: "splits.json".into(), source: e })?;
    for id in Split::ALL.iter().flat_map(|&s| splits.ids(s)) {
        if !samples.iter().any(|s| &s.id == id) {
            return Err(DataError::UnknownId(id.clone()));
        }
    }
    Ok(Corpus { root, samples, index, splits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{read_captions, read_raw_annotations, restructure, synth_corpus, SynthConfig};

    #[test]
    fn write_then_load() {
        let c = synth_corpus(&SynthConfig { n_clips: 20, seed: 5, ..SynthConfig::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&c, dir.path()).unwrap();
        for f in CORPUS_FILES {
            assert!(dir.path().join(f).is_file(), "{f}");
        }

        let loaded = load_corpus(dir.path()).unwrap();
        assert_eq!(loaded.samples, c.samples);
        assert_eq!(loaded.splits, c.splits);
        assert_eq!(loaded.index, c.index);
        for clip in &c.clips {
            assert_eq!(&loaded.features(&clip.id).unwrap(), clip);
        }
        let test = loaded.split(Split::Test).unwrap();
        assert_eq!(test.len(), c.splits.test.len());

        let raw = read_raw_annotations(BufReader::new(File::open(dir.path().join("annotations.jsonl")).unwrap())).unwrap();
        assert_eq!(restructure(&raw).unwrap().samples.len(), 20);
        let refs = read_captions(BufReader::new(File::open(dir.path().join("references.jsonl")).unwrap())).unwrap();
        assert_eq!(refs.len(), 40);
    }
}
