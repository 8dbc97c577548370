//! Batch driver for the adaptive random testing experiments.

mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{CampaignConfig, Mode, Overrides, SEED_ENV};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "swfc-art", version, about = "Adaptive random testing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// F-measure trials per (strategy, d, theta, pattern) cell.
    Simulate(Overrides),
    /// Generation time against test-case count, with log-log slopes.
    Bench(Overrides),
    /// Discrepancy of failure-free sequences.
    Discrepancy(Overrides),
    /// Nearest-neighbor recall of the graph index against brute force.
    Recall(Overrides),
}

fn run(command: Command) -> Result<(), CliError> {
    let (mode, flags) = match command {
        Command::Simulate(f) => (Mode::Simulate, f),
        Command::Bench(f) => (Mode::Bench, f),
        Command::Discrepancy(f) => (Mode::Discrepancy, f),
        Command::Recall(f) => (Mode::Recall, f),
    };
    let config = CampaignConfig::resolve(mode, flags, std::env::var(SEED_ENV).ok())?;
    match mode {
        Mode::Simulate => commands::simulate(&config),
        Mode::Bench => commands::bench(&config),
        Mode::Discrepancy => commands::discrepancy_cmd(&config),
        Mode::Recall => commands::recall(&config),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
