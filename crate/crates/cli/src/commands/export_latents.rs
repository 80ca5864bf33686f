//! `latentsr export-latents` — prior latent means per corpus entry, as CSV
//! for external visualization tools.

use crate::config::{write_sidecar, TOOL_VERSION};
use crate::{CliError, CliResult};
use anyhow::{anyhow, Context};
use clap::Parser;
use latentsr_core::datagen::load_corpus;
use latentsr_core::encoding::encode_samples;
use latentsr_core::model::encode_prior;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::PathBuf;

#[derive(Parser)]
pub struct Args {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Cap on corpus entries exported (0 = all).
    #[arg(long, default_value_t = 0)]
    limit: usize,
    /// Output CSV: entry,family,D,mu_0..mu_{d-1}.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Resolved {
    pub tool_version: String,
    pub checkpoint: PathBuf,
    pub corpus: PathBuf,
    pub limit: usize,
}

pub fn run(args: Args) -> CliResult {
    let ck = super::open_checkpoint(&args.checkpoint)?;
    let mut corpus = load_corpus(&args.corpus)
        .map_err(|e| anyhow!("loading corpus {}: {e}", args.corpus.display()))?;
    if args.limit > 0 && corpus.len() > args.limit {
        corpus.truncate(args.limit);
    }

    let file = std::fs::File::create(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let mut w = std::io::BufWriter::new(file);
    write!(w, "entry,family,D").context("io")?;
    for j in 0..ck.params.cfg.d {
        write!(w, ",mu_{j}").context("io")?;
    }
    writeln!(w).context("io")?;
    for (i, entry) in corpus.iter().enumerate() {
        let grid = encode_samples(&entry.samples)
            .map_err(|e| anyhow!("entry {i}: {e}"))?;
        let gauss = encode_prior(&ck.params, &grid).map_err(|e| CliError {
            code: 3,
            error: anyhow!("entry {i}: {e}"),
        })?;
        write!(w, "{i},{},{}", entry.family, entry.dim).context("io")?;
        for v in &gauss.mean {
            write!(w, ",{v}").context("io")?;
        }
        writeln!(w).context("io")?;
    }
    w.flush().context("io")?;

    let resolved = Resolved {
        tool_version: TOOL_VERSION.to_string(),
        checkpoint: args.checkpoint.clone(),
        corpus: args.corpus.clone(),
        limit: args.limit,
    };
    write_sidecar(&args.out, &resolved).context("writing config echo")?;
    println!("exported {} latent means to {}", corpus.len(), args.out.display());
    Ok(())
}
