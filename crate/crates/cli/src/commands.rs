use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use capscst::data::{
    load_corpus, read_captions, read_raw_annotations, restructure, synth_corpus, validate_dataset, write_captions,
    write_corpus, write_samples, CaptionRecord, Corpus, FeatureClip, FeatureIndex, Sample, Split, SynthConfig,
};
use capscst::metrics::score_all;
use capscst::pipeline::{fid_vid, idf_for, scst_examples, train_examples};
use capscst::report::{build_rows, parse_report, render_table, rows_json};
use capscst::scst::{decode_greedy, decode_sample, scst_train_with, ScstConfig};
use capscst::seed::derive_seed;
use capscst::seqmodel::{read_checkpoint, train_mle_with, write_checkpoint, AdamConfig, MleConfig, ModelConfig};
use capscst::textproc::{Caption, Vocab};
use capscst::Params;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

pub const CHECKPOINT: &str = "model.ckpt";
pub const VOCAB: &str = "vocab.json";

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut out = create(path)?;
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Prints `-0` as `0`.
fn fixed(v: f64, digits: usize) -> String {
    format!("{:.digits$}", v + 0.0)
}

pub fn ingest(input: &Path, out: &Path) -> Result<(), CliError> {
    let raw = read_raw_annotations(open(input)?)?;
    let restructured = restructure(&raw)?;
    if restructured.empty_avoidance > 0 {
        eprintln!("warning: {} records have an empty avoidance caption", restructured.empty_avoidance);
    }
    let mut w = create(out)?;
    write_samples(&restructured.samples, &mut w)?;
    w.flush()?;
    eprintln!("ingested {} samples", restructured.samples.len());
    Ok(())
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let sc = SynthConfig { n_clips: cfg.n_clips, frames: cfg.frames, dim: cfg.dim, noise_std: cfg.noise_std, seed: cfg.seed };
    let corpus = synth_corpus(&sc)?;
    write_corpus(&corpus, out)?;
    eprintln!(
        "wrote {} clips (train {}, val {}, test {})",
        corpus.samples.len(),
        corpus.splits.train.len(),
        corpus.splits.val.len(),
        corpus.splits.test.len()
    );
    Ok(())
}

pub fn validate(dir: &Path) -> Result<(), CliError> {
    let corpus = load_corpus(dir)?;
    let report = validate_dataset(&corpus.samples, &corpus.index, &corpus.root);
    println!("{}", serde_json::to_string(&report)?);
    if report.empty_captions > 0 {
        eprintln!("warning: {} empty captions", report.empty_captions);
    }
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::validation("dataset failed validation"))
    }
}

/// Samples of `split` with their features, in split order.
fn load_split(corpus: &Corpus, split: Split) -> Result<(Vec<&Sample>, Vec<FeatureClip>), CliError> {
    let samples = corpus.split(split)?;
    let clips = samples.iter().map(|s| corpus.features(&s.id)).collect::<Result<Vec<_>, _>>()?;
    if samples.is_empty() {
        return Err(CliError::validation(format!("split {split} is empty")));
    }
    Ok((samples, clips))
}

fn save_model(dir: &Path, params: &Params, vocab: &Vocab) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let mut out = create(&dir.join(CHECKPOINT))?;
    write_checkpoint(params, &mut out)?;
    fs::write(dir.join(VOCAB), vocab.to_json() + "\n")?;
    Ok(())
}

fn load_model(dir: &Path) -> Result<(Params, Vocab), CliError> {
    let params = read_checkpoint(open(&dir.join(CHECKPOINT))?)?;
    let vocab_path = dir.join(VOCAB);
    let text = fs::read_to_string(&vocab_path).map_err(|e| CliError::Io(format!("{}: {e}", vocab_path.display())))?;
    let vocab = Vocab::from_json(&text)?;
    if vocab.len() != params.config().vocab_size {
        return Err(CliError::validation(format!(
            "vocabulary has {} entries but the model expects {}",
            vocab.len(),
            params.config().vocab_size
        )));
    }
    Ok((params, vocab))
}

#[derive(Serialize)]
struct EpochLoss {
    epoch: usize,
    loss: f64,
}

pub fn train_mle(cfg: &RunConfig, corpus_dir: &Path, out: &Path) -> Result<(), CliError> {
    let corpus = load_corpus(corpus_dir)?;
    let (samples, clips) = load_split(&corpus, Split::Train)?;
    let vocab = Vocab::build(samples.iter().map(|s| s.caption(cfg.role)), 1);
    let model_cfg = ModelConfig {
        d_model: cfg.d_model,
        n_heads: cfg.n_heads,
        max_len: cfg.max_len,
        ..ModelConfig::new(vocab.len(), clips[0].dim, derive_seed(cfg.seed, &["init".into()]))
    };
    let mut params = Params::init(&model_cfg)?;
    let pairs: Vec<_> = samples.iter().copied().zip(&clips).collect();
    let data = train_examples(&pairs, &vocab, cfg.role, model_cfg.max_len);
    let mle = MleConfig {
        epochs: cfg.mle_epochs,
        batch_size: cfg.batch,
        seed: derive_seed(cfg.seed, &["mle".into()]),
        adam: AdamConfig { lr: cfg.mle_lr, ..AdamConfig::default() },
    };
    let curve = train_mle_with(&mut params, &data, &mle, |epoch, loss| eprintln!("mle epoch {epoch}: loss {loss:.6}"))?;
    save_model(out, &params, &vocab)?;
    let log: Vec<EpochLoss> = curve.into_iter().enumerate().map(|(epoch, loss)| EpochLoss { epoch, loss }).collect();
    write_jsonl(&out.join("mle_log.jsonl"), &log)
}

pub fn train_scst(cfg: &RunConfig, corpus_dir: &Path, init: &Path, out: &Path) -> Result<(), CliError> {
    let corpus = load_corpus(corpus_dir)?;
    let (samples, clips) = load_split(&corpus, Split::Train)?;
    let (mut params, vocab) = load_model(init)?;
    let pairs: Vec<_> = samples.iter().copied().zip(&clips).collect();
    let data = scst_examples(&pairs, cfg.role);
    let idf = idf_for(samples.iter().copied(), cfg.role)?;
    let scst = ScstConfig {
        epochs: cfg.scst_epochs,
        batch_size: cfg.batch,
        seed: derive_seed(cfg.seed, &["scst".into()]),
        temperature: cfg.temperature,
        max_len: cfg.max_len.min(params.config().max_len),
        adam: AdamConfig { lr: cfg.scst_lr, ..AdamConfig::default() },
    };
    let log = scst_train_with(&mut params, &data, &vocab, &idf, &scst, |s| {
        eprintln!("scst epoch {}: reward {:.6} baseline {:.6} loss {:.6}", s.epoch, s.mean_reward, s.mean_baseline, s.loss)
    })?;
    save_model(out, &params, &vocab)?;
    write_jsonl(&out.join("scst_log.jsonl"), &log)
}

pub fn decode(cfg: &RunConfig, corpus_dir: &Path, model: &Path, out: &Path) -> Result<(), CliError> {
    let corpus = load_corpus(corpus_dir)?;
    let (samples, clips) = load_split(&corpus, cfg.split)?;
    let (params, vocab) = load_model(model)?;
    let mut records = Vec::with_capacity(samples.len());
    for (s, clip) in samples.iter().zip(&clips) {
        let features = clip.to_matrix();
        let decoded = if cfg.sample {
            let seed = derive_seed(cfg.seed, &["decode".into(), s.id.as_str().into()]);
            decode_sample(&params, &features, cfg.max_len, seed, cfg.temperature)?
        } else {
            decode_greedy(&params, &features, cfg.max_len)?
        };
        records.push(CaptionRecord { id: s.id.clone(), role: cfg.role, text: decoded.text(&vocab) });
    }
    let mut w = create(out)?;
    write_captions(&records, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn score(hyps: &Path, refs: &Path, out: &Path) -> Result<(), CliError> {
    let hyps = read_captions(open(hyps)?)?;
    let refs = read_captions(open(refs)?)?;
    let by_key: HashMap<(&str, _), &CaptionRecord> = refs.iter().map(|r| ((r.id.as_str(), r.role), r)).collect();
    let mut h = Vec::with_capacity(hyps.len());
    let mut r = Vec::with_capacity(hyps.len());
    for rec in &hyps {
        let reference = by_key
            .get(&(rec.id.as_str(), rec.role))
            .ok_or_else(|| CliError::validation(format!("no {} reference for {:?}", rec.role, rec.id)))?;
        h.push(Caption::new(rec.text.clone(), rec.role));
        r.push(Caption::new(reference.text.clone(), reference.role));
    }
    let idf = capscst::metrics::IdfTable::build(&r.iter().map(|c| c.tokens.as_slice()).collect::<Vec<_>>())?;
    let report = score_all(&h, &r, &idf)?;
    for (name, v) in [
        ("B1", report.b1),
        ("B2", report.b2),
        ("B3", report.b3),
        ("B4", report.b4),
        ("ROUGE_L", report.rouge_l),
        ("METEOR", report.meteor),
        ("CIDEr-D", report.cider_d),
    ] {
        println!("{name} {}", fixed(v, 4));
    }
    let mut w = create(out)?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn load_feature_set(index_path: &Path) -> Result<Vec<FeatureClip>, CliError> {
    let index = FeatureIndex::read(index_path)?;
    let base = index_path.parent().unwrap_or(Path::new("."));
    Ok(index.load_all(base)?)
}

pub fn fid(a: &Path, b: &Path) -> Result<(), CliError> {
    let (fid, vid) = fid_vid(&load_feature_set(a)?, &load_feature_set(b)?)?;
    if !(fid.is_finite() && vid.is_finite()) {
        return Err(CliError::Numeric(format!("non-finite distance: FID {fid}, VID {vid}")));
    }
    println!("FID {}", fixed(fid, 6));
    println!("VID {}", fixed(vid, 6));
    Ok(())
}

pub fn report(reports: &[std::path::PathBuf], labels: &[String], json_out: Option<&Path>) -> Result<(), CliError> {
    let parsed = reports
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            parse_report(&text).map_err(|e| CliError::validation(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows = build_rows(parsed, labels)?;
    print!("{}", render_table(&rows));
    if let Some(path) = json_out {
        let mut w = create(path)?;
        w.write_all((rows_json(&rows) + "\n").as_bytes())?;
        w.flush()?;
    }
    Ok(())
}
