mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use capscst::data::Split;
use capscst::textproc::Role;
use clap::{Args, Parser, Subcommand};

use config::{overlay, RunConfig};
use error::CliError;

/// Caption decoder pipeline: ingest, synthesize, train (MLE then SCST), decode, score, report.
///
/// Exit status: 0 success, 1 I/O error, 2 validation error, 3 non-finite loss.
#[derive(Debug, Parser)]
#[command(name = "capscst", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Restructure raw {id, texts, causes, measures} annotations into sample JSONL.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic accident corpus directory.
    Synth(SynthArgs),
    /// Check a corpus directory's captions and feature files; prints a JSON report.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Teacher-forced maximum-likelihood training on the train split.
    TrainMle(TrainMleArgs),
    /// Self-critical fine-tuning of a trained model on the train split.
    TrainScst(TrainScstArgs),
    /// Caption one split with a trained model; writes hypothesis JSONL.
    Decode(DecodeArgs),
    /// Score hypothesis captions against references; writes a score report JSON.
    Score {
        #[arg(long)]
        hyps: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// FID (per-frame) and VID (per-clip pooled) between two feature sets, given their features.json indexes.
    Fid {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Render score reports as a table with columns Framework Dataset B1 B2 B3 B4 C M R.
    Report {
        /// Score report JSON files, one table row each.
        #[arg(long, num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
        /// One "Framework/Dataset" label per report.
        #[arg(long, num_args = 1.., required = true)]
        labels: Vec<String>,
        /// Also write the rows as JSON here.
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
    /// Print the effective configuration (defaults overlaid with --config).
    Config {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// JSON config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Number of clips [default: 500]
    #[arg(long)]
    n_clips: Option<usize>,
    /// Frames per clip [default: 8]
    #[arg(long)]
    frames: Option<usize>,
    /// Feature width [default: 16]
    #[arg(long)]
    dim: Option<usize>,
    /// Gaussian feature noise [default: 0.1]
    #[arg(long)]
    noise_std: Option<f64>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// JSON config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run seed; every stage derives its own seed from it [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Caption task [default: description]
    #[arg(long)]
    role: Option<Role>,
    /// Longest sequence, BOS and EOS included [default: 24]
    #[arg(long)]
    max_len: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainMleArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Output model directory
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: ModelArgs,
    /// Epochs [default: 30]
    #[arg(long)]
    epochs: Option<usize>,
    /// Sequences per batch [default: 8]
    #[arg(long)]
    batch: Option<usize>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    lr: Option<f64>,
    /// Model width [default: 64]
    #[arg(long)]
    d_model: Option<usize>,
    /// Attention heads [default: 2]
    #[arg(long)]
    n_heads: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainScstArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Model directory to start from
    #[arg(long)]
    init: PathBuf,
    /// Output model directory
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: ModelArgs,
    /// Epochs [default: 10]
    #[arg(long)]
    epochs: Option<usize>,
    /// Sequences per batch [default: 8]
    #[arg(long)]
    batch: Option<usize>,
    /// Adam learning rate [default: 0.00005]
    #[arg(long)]
    lr: Option<f64>,
    /// Rollout sampling temperature [default: 1.0]
    #[arg(long)]
    temperature: Option<f64>,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Model directory
    #[arg(long)]
    model: PathBuf,
    /// Output hypothesis JSONL
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: ModelArgs,
    /// Split to caption [default: test]
    #[arg(long)]
    split: Option<Split>,
    /// Sample instead of greedy decoding [default: off]
    #[arg(long)]
    sample: bool,
    /// Sampling temperature [default: 1.0]
    #[arg(long)]
    temperature: Option<f64>,
}

fn with_common(common: &ModelArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    overlay!(cfg, common, [seed, role, max_len]);
    Ok(cfg)
}

fn echo(cfg: &RunConfig) {
    eprintln!("config {}", cfg.to_json());
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { input, out } => commands::ingest(&input, &out),
        Command::Synth(a) => {
            let mut cfg = RunConfig::load(a.config.as_deref())?;
            overlay!(cfg, a, [seed, n_clips, frames, dim, noise_std]);
            echo(&cfg);
            commands::synth(&cfg, &a.out)
        }
        Command::Validate { corpus } => commands::validate(&corpus),
        Command::TrainMle(a) => {
            let mut cfg = with_common(&a.common)?;
            overlay!(cfg, a, [batch, d_model, n_heads]);
            if let Some(v) = a.epochs {
                cfg.mle_epochs = v;
            }
            if let Some(v) = a.lr {
                cfg.mle_lr = v;
            }
            echo(&cfg);
            commands::train_mle(&cfg, &a.corpus, &a.out)
        }
        Command::TrainScst(a) => {
            let mut cfg = with_common(&a.common)?;
            overlay!(cfg, a, [batch, temperature]);
            if let Some(v) = a.epochs {
                cfg.scst_epochs = v;
            }
            if let Some(v) = a.lr {
                cfg.scst_lr = v;
            }
            echo(&cfg);
            commands::train_scst(&cfg, &a.corpus, &a.init, &a.out)
        }
        Command::Decode(a) => {
            let mut cfg = with_common(&a.common)?;
            overlay!(cfg, a, [split, temperature]);
            cfg.sample |= a.sample;
            echo(&cfg);
            commands::decode(&cfg, &a.corpus, &a.model, &a.out)
        }
        Command::Score { hyps, refs, out } => commands::score(&hyps, &refs, &out),
        Command::Fid { a, b } => commands::fid(&a, &b),
        Command::Report { reports, labels, json_out } => commands::report(&reports, &labels, json_out.as_deref()),
        Command::Config { config } => {
            println!("{}", serde_json::to_string_pretty(&RunConfig::load(config.as_deref())?)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
