//! `satseek` command-line front end.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] satseek_core::Error),
}

/// Result of a command that ran to completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    /// Infeasible problem or a failed verification verdict.
    Verdict,
    Diverged,
}

impl Outcome {
    fn code(self) -> u8 {
        match self {
            Outcome::Ok => 0,
            Outcome::Verdict => 2,
            Outcome::Diverged => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "satseek", version, about = "Saturated extremum-seeking synthesis, certification and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Project configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Gain file: a `gain.json` written by `synth` or a bare matrix of rows.
    #[arg(long)]
    pub gain: Option<PathBuf>,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for every randomized check.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a robust gain and its certificate.
    Synth(CommonArgs),
    /// Certify a given gain and check the certificate on the averaged loop.
    Analyze(CommonArgs),
    /// Simulate the full loop and write the trace.
    Simulate(CommonArgs),
    /// Frequency and amplitude sweeps of the full loop against the averaged loop.
    Sweep(CommonArgs),
    /// Run the configured gain against the comparison gain.
    Compare(CommonArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Synth(args) => commands::synth(args),
        Command::Analyze(args) => commands::analyze(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Sweep(args) => commands::sweep(args),
        Command::Compare(args) => commands::compare(args),
    };
    match result {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
