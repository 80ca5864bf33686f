//! `latentsr train` — train the CVAE on a corpus, writing a checkpoint
//! and a CSV log.

use crate::config::{load_toml, write_sidecar, TOOL_VERSION};
use crate::{CliError, CliResult};
use anyhow::{anyhow, Context};
use clap::Parser;
use latentsr_core::datagen::load_corpus;
use latentsr_core::model::{ModelError, TrainConfig, Trainer};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Parser)]
pub struct Args {
    /// Corpus JSON-lines file.
    #[arg(long)]
    corpus: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Training log CSV path (default: <out>.log.csv).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Resume from an existing checkpoint, continuing the step counter.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Config file (TOML) holding a [train] table.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    steps_per_epoch: Option<usize>,
    #[arg(long)]
    base_lr: Option<f64>,
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long)]
    max_vars: Option<usize>,
    #[arg(long)]
    rows_per_entry: Option<usize>,
    #[arg(long)]
    n_latent: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Resolved {
    pub tool_version: String,
    pub corpus: PathBuf,
    pub out: PathBuf,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
struct FileConfig {
    train: Option<TrainConfig>,
}

pub fn run(args: Args) -> CliResult {
    let file: FileConfig = match &args.config {
        Some(p) => load_toml(p)?,
        None => FileConfig::default(),
    };
    let mut cfg = file.train.unwrap_or_default();
    // Flag overrides.
    if let Some(v) = args.d {
        cfg.d = v;
    }
    if let Some(v) = args.layers {
        cfg.layers = v;
    }
    if let Some(v) = args.heads {
        cfg.heads = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.steps_per_epoch {
        cfg.steps_per_epoch = v;
    }
    if let Some(v) = args.base_lr {
        cfg.base_lr = v;
    }
    if let Some(v) = args.warmup {
        cfg.warmup = v;
    }
    if let Some(v) = args.max_vars {
        cfg.max_vars = v;
    }
    if let Some(v) = args.rows_per_entry {
        cfg.rows_per_entry = v;
    }
    if let Some(v) = args.n_latent {
        cfg.n_latent = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }

    let corpus = load_corpus(&args.corpus)
        .map_err(|e| anyhow!("loading corpus {}: {e}", args.corpus.display()))?;

    let mut trainer = match &args.resume {
        Some(p) => {
            let mut ck = super::open_checkpoint(p)?;
            // A larger step budget may be supplied on resume.
            if args.epochs.is_some() {
                ck.train_cfg.epochs = cfg.epochs;
            }
            Trainer::from_checkpoint(ck, &corpus).map_err(|e| computation(e))?
        }
        None => Trainer::new(&corpus, cfg.clone()).map_err(computation)?,
    };

    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| with_suffix(&args.out, ".log.csv"));
    trainer
        .run(Some(&args.out), Some(&log_path))
        .map_err(computation)?;
    trainer.save(&args.out).map_err(computation)?;

    let resolved = Resolved {
        tool_version: TOOL_VERSION.to_string(),
        corpus: args.corpus.clone(),
        out: args.out.clone(),
        train: trainer.cfg.clone(),
    };
    write_sidecar(&args.out, &resolved).context("writing config echo")?;
    println!(
        "trained to step {} ({} params); checkpoint {}",
        trainer.step,
        trainer.params.param_count(),
        args.out.display()
    );
    Ok(())
}

fn with_suffix(p: &std::path::Path, suffix: &str) -> PathBuf {
    let mut name = p
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    name.push_str(suffix);
    p.with_file_name(name)
}

fn computation(e: ModelError) -> CliError {
    let code = 3;
    let error = match &e {
        ModelError::NonFiniteLoss { step, .. } => {
            anyhow!("non-finite loss at step {step}: {e}")
        }
        _ => anyhow!("{e}"),
    };
    CliError { code, error }
}
