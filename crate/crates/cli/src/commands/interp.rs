//! `latentsr interp` — decode latent interpolants between two datasets.

use crate::config::{read_data_csv, write_sidecar, TOOL_VERSION};
use crate::{CliError, CliResult};
use anyhow::{anyhow, Context};
use clap::Parser;
use latentsr_core::pipeline::{interpolate, InterpPoint, DEFAULT_RATIOS};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Parser)]
pub struct Args {
    #[arg(long)]
    checkpoint: PathBuf,
    /// First dataset CSV (ratio 0 endpoint).
    #[arg(long)]
    data1: PathBuf,
    /// Second dataset CSV (ratio 1 endpoint).
    #[arg(long)]
    data2: PathBuf,
    /// Interpolation ratios (default 0,0.25,0.5,0.75,1).
    #[arg(long, value_delimiter = ',')]
    ratios: Option<Vec<f64>>,
    /// Report JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Resolved {
    pub checkpoint: PathBuf,
    pub data1: PathBuf,
    pub data2: PathBuf,
    pub ratios: Vec<f64>,
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    tool_version: &'a str,
    command: &'a str,
    config: &'a Resolved,
    validity_rate: f64,
    points: Vec<PointDoc<'a>>,
}

#[derive(Serialize)]
struct PointDoc<'a> {
    ratio: f64,
    expr: &'a str,
    tokens: &'a [String],
}

pub fn run(args: Args) -> CliResult {
    let ratios = args.ratios.clone().unwrap_or_else(|| DEFAULT_RATIOS.to_vec());
    let ck = super::open_checkpoint(&args.checkpoint)?;
    let d1 = read_data_csv(&args.data1)?;
    let d2 = read_data_csv(&args.data2)?;
    let report = interpolate(&ck.params, &d1, &d2, &ratios).map_err(|e| CliError {
        code: 3,
        error: anyhow!("interpolation failed: {e}"),
    })?;

    let resolved = Resolved {
        checkpoint: args.checkpoint.clone(),
        data1: args.data1.clone(),
        data2: args.data2.clone(),
        ratios,
    };
    let points: Vec<PointDoc> = report
        .points
        .iter()
        .map(|p: &InterpPoint| PointDoc {
            ratio: p.ratio,
            expr: p.expr.as_deref().unwrap_or("INVALID"),
            tokens: &p.tokens,
        })
        .collect();
    let doc = ReportDoc {
        tool_version: TOOL_VERSION,
        command: "interp",
        config: &resolved,
        validity_rate: report.validity_rate,
        points,
    };
    let json = serde_json::to_string_pretty(&doc).context("serializing report")?;
    std::fs::write(&args.out, json + "\n")
        .with_context(|| format!("writing {}", args.out.display()))?;
    write_sidecar(&args.out, &resolved).context("writing config echo")?;
    println!(
        "validity {}/{} over ratios {:?}",
        report.points.iter().filter(|p| p.expr.is_some()).count(),
        report.points.len(),
        resolved.ratios
    );
    Ok(())
}
