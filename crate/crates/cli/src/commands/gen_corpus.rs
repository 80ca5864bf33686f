//! `latentsr gen-corpus` — synthesize an equation corpus.

use crate::config::{load_toml, pick, write_sidecar, GenSection, TOOL_VERSION};
use crate::{CliError, CliResult};
use anyhow::{anyhow, Context};
use clap::Parser;
use latentsr_core::datagen::build_corpus;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Parser)]
pub struct Args {
    /// Operator set: logexp | trig | exp-family | log-family | trig-family.
    #[arg(long)]
    ops: Option<String>,
    /// Complexity cap (token count).
    #[arg(long)]
    max_tokens: Option<usize>,
    /// Variables drawn from x0..x{max-vars-1}.
    #[arg(long)]
    max_vars: Option<usize>,
    /// Corpus size (unique entries).
    #[arg(long)]
    count: Option<usize>,
    /// Numeric samples per equation.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    domain_lo: Option<f64>,
    #[arg(long)]
    domain_hi: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Config file (TOML, same schema as the sidecar echo).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output JSON-lines path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Resolved {
    pub tool_version: String,
    pub seed: u64,
    #[serde(flatten)]
    pub gen: GenSection,
    pub out: PathBuf,
}

pub fn run(args: Args) -> CliResult {
    let file: Option<Resolved> = match &args.config {
        Some(p) => Some(load_toml(p)?),
        None => None,
    };
    let fgen = file.as_ref().map(|f| f.gen.clone());
    let d = GenSection::default();
    let gen = GenSection {
        ops: pick(args.ops, fgen.as_ref().map(|g| g.ops.clone()), d.ops),
        max_tokens: pick(args.max_tokens, fgen.as_ref().map(|g| g.max_tokens), d.max_tokens),
        max_vars: pick(args.max_vars, fgen.as_ref().map(|g| g.max_vars), d.max_vars),
        m: pick(args.m, fgen.as_ref().map(|g| g.m), d.m),
        domain_lo: pick(args.domain_lo, fgen.as_ref().map(|g| g.domain_lo), d.domain_lo),
        domain_hi: pick(args.domain_hi, fgen.as_ref().map(|g| g.domain_hi), d.domain_hi),
        count: pick(args.count, fgen.as_ref().map(|g| g.count), d.count),
    };
    let seed = pick(args.seed, file.as_ref().map(|f| f.seed), 0);
    let resolved = Resolved {
        tool_version: TOOL_VERSION.to_string(),
        seed,
        gen: gen.clone(),
        out: args.out.clone(),
    };

    let cfg = gen.to_gen_config(seed)?;
    build_corpus(&cfg, gen.count, &args.out).map_err(|e| CliError {
        code: 3,
        error: anyhow!("corpus generation failed: {e}"),
    })?;
    write_sidecar(&args.out, &resolved).context("writing config echo")?;
    println!(
        "wrote {} entries to {}",
        gen.count,
        args.out.display()
    );
    Ok(())
}
