//! `latentsr bench` — noise benchmark over target expressions, plus
//! Pareto ranking of a method-metrics table.

use crate::config::{load_toml, write_sidecar, GenSection, SearchSection, TOOL_VERSION};
use crate::{CliError, CliResult};
use anyhow::{anyhow, Context};
use clap::Parser;
use latentsr_core::expr::parse_text;
use latentsr_core::pipeline::{noise_bench, pareto_rank, RunRow, DEFAULT_NOISE_LEVELS};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
pub struct Args {
    /// Trained checkpoint (required unless --pareto-in is used).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// File with one target expression per line (canonical infix form).
    #[arg(long)]
    targets: Option<PathBuf>,
    /// Noise levels (default 0,0.001,0.01,0.1).
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    /// Config file (TOML) holding [gen] and [search] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (runs.csv, summary.csv).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rank an existing method table instead: CSV with header
    /// method,r2_rank,complexity_rank,time_rank.
    #[arg(long)]
    pareto_in: Option<PathBuf>,
    /// Pareto report JSON path (with --pareto-in).
    #[arg(long)]
    pareto_out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
struct FileConfig {
    seed: Option<u64>,
    gen: Option<GenSection>,
    search: Option<SearchSection>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Resolved {
    pub tool_version: String,
    pub checkpoint: PathBuf,
    pub targets: PathBuf,
    pub levels: Vec<f64>,
    pub seed: u64,
    pub gen: GenSection,
    pub search: SearchSection,
}

pub fn run(args: Args) -> CliResult {
    if let Some(table) = &args.pareto_in {
        let out = args
            .pareto_out
            .clone()
            .ok_or_else(|| usage("--pareto-out is required with --pareto-in"))?;
        return pareto_mode(table, &out);
    }
    let checkpoint = args
        .checkpoint
        .clone()
        .ok_or_else(|| usage("--checkpoint is required"))?;
    let targets_path = args
        .targets
        .clone()
        .ok_or_else(|| usage("--targets is required"))?;
    let out_dir = args.out.clone().ok_or_else(|| usage("--out is required"))?;

    let file: FileConfig = match &args.config {
        Some(p) => load_toml(p)?,
        None => FileConfig::default(),
    };
    let gen = file.gen.unwrap_or_default();
    let section = file.search.unwrap_or_default();
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let levels = args
        .levels
        .clone()
        .unwrap_or_else(|| DEFAULT_NOISE_LEVELS.to_vec());

    let ck = super::open_checkpoint(&checkpoint)?;
    let text = std::fs::read_to_string(&targets_path)
        .with_context(|| format!("reading targets {}", targets_path.display()))?;
    let mut targets = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        targets.push(
            parse_text(line)
                .map_err(|e| anyhow!("targets line {}: {e}", i + 1))?,
        );
    }
    anyhow::ensure!(!targets.is_empty(), "no targets parsed");

    let gen_cfg = gen.to_gen_config(seed)?;
    let search_cfg = section.to_search_config(ck.params.cfg.d, seed);
    let report = noise_bench(&ck.params, &targets, &levels, &gen_cfg, &search_cfg, seed)
        .map_err(|e| CliError {
            code: 3,
            error: anyhow!("benchmark failed: {e}"),
        })?;

    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let runs_path = out_dir.join("runs.csv");
    {
        let mut w = std::io::BufWriter::new(
            std::fs::File::create(&runs_path).context("creating runs.csv")?,
        );
        writeln!(w, "{}", RunRow::CSV_HEADER).context("io")?;
        for row in &report.runs {
            writeln!(w, "{}", row.csv_row()).context("io")?;
        }
        w.flush().context("io")?;
    }
    let summary_path = out_dir.join("summary.csv");
    {
        let mut w = std::io::BufWriter::new(
            std::fs::File::create(&summary_path).context("creating summary.csv")?,
        );
        writeln!(w, "level,mean_r2,mean_time_s,mean_complexity,failures,runs").context("io")?;
        for row in &report.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                row.level, row.mean_r2, row.mean_time_s, row.mean_complexity, row.failures, row.runs
            )
            .context("io")?;
            println!(
                "level {:>6}: mean r2 {:.4} | time {:.2}s | complexity {:.1} | {}/{} ok",
                row.level,
                row.mean_r2,
                row.mean_time_s,
                row.mean_complexity,
                row.runs - row.failures,
                row.runs
            );
        }
        w.flush().context("io")?;
    }
    let resolved = Resolved {
        tool_version: TOOL_VERSION.to_string(),
        checkpoint,
        targets: targets_path,
        levels,
        seed,
        gen,
        search: section,
    };
    write_sidecar(&runs_path, &resolved).context("writing config echo")?;
    Ok(())
}

fn pareto_mode(table: &Path, out: &Path) -> CliResult {
    let text = std::fs::read_to_string(table)
        .with_context(|| format!("reading {}", table.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().context("empty method table")?;
    anyhow::ensure!(
        header.trim() == "method,r2_rank,complexity_rank,time_rank",
        "expected header method,r2_rank,complexity_rank,time_rank"
    );
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        anyhow::ensure!(parts.len() == 4, "line {}: expected 4 columns", i + 2);
        let metrics: Result<Vec<f64>, _> = parts[1..].iter().map(|v| v.parse::<f64>()).collect();
        rows.push((
            parts[0].to_string(),
            metrics.with_context(|| format!("line {}: bad rank", i + 2))?,
        ));
    }
    let report = pareto_rank(&rows);

    #[derive(Serialize)]
    struct Doc<'a> {
        tool_version: &'a str,
        command: &'a str,
        config: Config<'a>,
        methods: &'a [String],
        front_of: &'a [usize],
        fronts: &'a [Vec<usize>],
    }
    #[derive(Serialize)]
    struct Config<'a> {
        pareto_in: &'a Path,
    }
    let doc = Doc {
        tool_version: TOOL_VERSION,
        command: "bench --pareto-in",
        config: Config { pareto_in: table },
        methods: &report.methods,
        front_of: &report.front_of,
        fronts: &report.fronts,
    };
    let json = serde_json::to_string_pretty(&doc).context("serializing pareto report")?;
    std::fs::write(out, json + "\n").with_context(|| format!("writing {}", out.display()))?;
    for (i, m) in report.methods.iter().enumerate() {
        println!("front {}: {m}", report.front_of[i]);
    }
    Ok(())
}

fn usage(msg: &str) -> CliError {
    CliError {
        code: 2,
        error: anyhow!("{msg}"),
    }
}
