//! `latentsr search` — run the latent-space search on a data CSV.

use crate::config::{load_toml, read_data_csv, write_sidecar, ArtifactHeader, SearchSection, TOOL_VERSION};
use crate::{CliError, CliResult};
use anyhow::{anyhow, Context};
use clap::Parser;
use latentsr_core::pipeline::{search, GenTrace, PipelineError, SearchResult};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::PathBuf;

#[derive(Parser)]
pub struct Args {
    /// Trained checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Data CSV with header x0..x{D-1},y.
    #[arg(long)]
    data: PathBuf,
    /// Result JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Optimizer trace CSV path (default: <out>.trace.csv).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Config file (TOML) holding a [search] table.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    parents: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    initial_step: Option<f64>,
    #[arg(long)]
    max_generations: Option<usize>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    fit_fraction: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Resolved {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub seed: u64,
    #[serde(flatten)]
    pub search: SearchSection,
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
struct FileConfig {
    seed: Option<u64>,
    search: Option<SearchSection>,
}

pub fn run(args: Args) -> CliResult {
    let file: FileConfig = match &args.config {
        Some(p) => load_toml(p)?,
        None => FileConfig::default(),
    };
    let mut section = file.search.unwrap_or_default();
    if let Some(v) = args.population {
        section.population = v;
    }
    if let Some(v) = args.parents {
        section.parents = v;
    }
    if let Some(v) = args.top_k {
        section.top_k = v;
    }
    if let Some(v) = args.initial_step {
        section.initial_step = v;
    }
    if let Some(v) = args.max_generations {
        section.max_generations = v;
    }
    if let Some(v) = args.omega {
        section.omega = v;
    }
    if let Some(v) = args.fit_fraction {
        section.fit_fraction = v;
    }
    if let Some(v) = args.patience {
        section.patience = v;
    }
    if let Some(v) = args.jobs {
        section.jobs = v;
    }
    let seed = args.seed.or(file.seed).unwrap_or(0);

    let ck = super::open_checkpoint(&args.checkpoint)?;
    let data = read_data_csv(&args.data)?;
    let cfg = section.to_search_config(ck.params.cfg.d, seed);

    let result = match search(&ck.params, &data, &cfg) {
        Ok(r) => r,
        Err(PipelineError::Degenerate) => {
            return Err(CliError {
                code: 4,
                error: anyhow!("search degenerated with no valid fallback"),
            })
        }
        Err(e) => {
            return Err(CliError {
                code: 3,
                error: anyhow!("search failed: {e}"),
            })
        }
    };

    let resolved = Resolved {
        checkpoint: args.checkpoint.clone(),
        data: args.data.clone(),
        seed,
        search: section,
    };
    write_result(&args.out, &resolved, &result)?;
    let trace_path = args
        .trace
        .clone()
        .unwrap_or_else(|| with_suffix(&args.out, ".trace.csv"));
    write_trace(&trace_path, &result.trace)?;
    write_sidecar(&args.out, &ArtifactHeader::new("search", resolved))
        .context("writing config echo")?;
    println!(
        "best: {} (r2 {:.6}, complexity {}, {:.2}s)",
        result.expr, result.r2, result.complexity, result.time_s
    );
    Ok(())
}

#[derive(Serialize)]
struct ResultDoc<'a> {
    tool_version: &'a str,
    command: &'a str,
    config: &'a Resolved,
    expr: &'a str,
    expr_prefix: &'a [String],
    r2: f64,
    complexity: usize,
    fitness: f64,
    time_s: f64,
    seed: u64,
    generations: u64,
    degenerate_fallback: bool,
}

fn write_result(path: &std::path::Path, cfg: &Resolved, r: &SearchResult) -> CliResult {
    let doc = ResultDoc {
        tool_version: TOOL_VERSION,
        command: "search",
        config: cfg,
        expr: &r.expr,
        expr_prefix: &r.expr_prefix,
        r2: r.r2,
        complexity: r.complexity,
        fitness: r.fitness,
        time_s: r.time_s,
        seed: r.seed,
        generations: r.generations,
        degenerate_fallback: r.degenerate_fallback,
    };
    let json = serde_json::to_string_pretty(&doc).context("serializing result")?;
    std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_trace(path: &std::path::Path, trace: &[GenTrace]) -> CliResult {
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "{}", GenTrace::CSV_HEADER).context("trace io")?;
    for row in trace {
        writeln!(w, "{}", row.csv_row()).context("trace io")?;
    }
    w.flush().context("trace io")?;
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
