//! `latentsr` — symbolic regression through a generative latent space.
//!
//! Subcommands: gen-corpus, train, search, interp, recon-eval, bench,
//! export-latents. Exit codes: 0 success, 2 usage, 3 computation failure,
//! 4 search degeneracy.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "latentsr", version, about = "Latent-space symbolic regression engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic equation corpus (JSON lines).
    GenCorpus(commands::gen_corpus::Args),
    /// Train the dual-branch CVAE on a corpus.
    Train(commands::train::Args),
    /// Search for an equation fitting a data CSV.
    Search(commands::search::Args),
    /// Decode linear latent interpolants between two datasets.
    Interp(commands::interp::Args),
    /// Branch reconstruction error over a corpus.
    ReconEval(commands::recon::Args),
    /// Noise benchmark over target expressions, or Pareto-rank a method
    /// table.
    Bench(commands::bench::Args),
    /// Export prior latent means for external visualization.
    ExportLatents(commands::export_latents::Args),
}

/// Error carrying a process exit code.
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

impl CliError {
    fn computation(error: anyhow::Error) -> CliError {
        CliError { code: 3, error }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(error: anyhow::Error) -> Self {
        CliError::computation(error)
    }
}

pub type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenCorpus(args) => commands::gen_corpus::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Search(args) => commands::search::run(args),
        Command::Interp(args) => commands::interp::run(args),
        Command::ReconEval(args) => commands::recon::run(args),
        Command::Bench(args) => commands::bench::run(args),
        Command::ExportLatents(args) => commands::export_latents::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
