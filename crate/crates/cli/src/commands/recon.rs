//! `latentsr recon-eval` — reconstruction error per branch over a corpus.

use crate::config::{write_sidecar, TOOL_VERSION};
use crate::{CliError, CliResult};
use anyhow::{anyhow, Context};
use clap::{Parser, ValueEnum};
use latentsr_core::datagen::load_corpus;
use latentsr_core::pipeline::{reconstruction_eval, ReconBranch};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::PathBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BranchArg {
    Posterior,
    Prior,
    Both,
}

#[derive(Parser)]
pub struct Args {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Which encoder branch to evaluate.
    #[arg(long, value_enum, default_value = "both")]
    branch: BranchArg,
    /// Cap on corpus entries evaluated (0 = all).
    #[arg(long, default_value_t = 0)]
    limit: usize,
    /// Output CSV path (columns branch,mean,std,entries).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Resolved {
    pub tool_version: String,
    pub checkpoint: PathBuf,
    pub corpus: PathBuf,
    pub branch: String,
    pub limit: usize,
}

pub fn run(args: Args) -> CliResult {
    let ck = super::open_checkpoint(&args.checkpoint)?;
    let mut corpus = load_corpus(&args.corpus)
        .map_err(|e| anyhow!("loading corpus {}: {e}", args.corpus.display()))?;
    if args.limit > 0 && corpus.len() > args.limit {
        corpus.truncate(args.limit);
    }
    let branches: Vec<ReconBranch> = match args.branch {
        BranchArg::Posterior => vec![ReconBranch::Posterior],
        BranchArg::Prior => vec![ReconBranch::Prior],
        BranchArg::Both => vec![ReconBranch::Posterior, ReconBranch::Prior],
    };

    let file = std::fs::File::create(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "branch,mean,std,entries").context("io")?;
    for branch in branches {
        let stats = reconstruction_eval(&ck.params, &corpus, branch).map_err(|e| CliError {
            code: 3,
            error: anyhow!("reconstruction failed: {e}"),
        })?;
        writeln!(
            w,
            "{},{},{},{}",
            branch.name(),
            stats.mean,
            stats.std,
            stats.entries
        )
        .context("io")?;
        println!(
            "{}: {:.4} ± {:.4} over {} entries",
            branch.name(),
            stats.mean,
            stats.std,
            stats.entries
        );
    }
    w.flush().context("io")?;

    let resolved = Resolved {
        tool_version: TOOL_VERSION.to_string(),
        checkpoint: args.checkpoint.clone(),
        corpus: args.corpus.clone(),
        branch: format!("{:?}", args.branch).to_lowercase(),
        limit: args.limit,
    };
    write_sidecar(&args.out, &resolved).context("writing config echo")?;
    Ok(())
}
