//! Batch front end for the coherency-based reduction pipeline.
//!
//! Subcommands: `reduce` runs the whole pipeline and writes the equivalent
//! case with its provenance; `modes` tabulates the small-signal spectrum;
//! `fit` aggregates named controllers into one fitted equivalent; `simulate`
//! integrates disturbance scenarios; `compare` validates a reduced case
//! against the full one in the small-signal and time domains.
//!
//! Exit codes: 0 on success, 1 when the mathematics or case validation
//! fails, 2 for missing or malformed inputs and unwritable outputs. Output
//! files are deterministic — reruns with identical inputs are byte-identical;
//! timings and warnings go to the stderr log.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// How a command failed, which fixes the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// The mathematics or the case content failed (exit code 1).
    Algorithm(String),
    /// Missing or malformed inputs, flags, or outputs (exit code 2).
    Config(String),
}

#[derive(Parser)]
#[command(
    name = "dyneq",
    version,
    about = "Coherency-based dynamic equivalents for power-system models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reduce a case: coherency grouping, REI/Kron network reduction,
    /// generator and controller aggregation
    Reduce(commands::ReduceArgs),
    /// Tabulate small-signal modes and the shape of the least-damped one
    Modes(commands::ModesArgs),
    /// Aggregate named controllers into one fitted equivalent
    Fit(commands::FitArgs),
    /// Integrate disturbance scenarios and write the trajectories
    Simulate(commands::SimulateArgs),
    /// Validate a reduced case against the full one in both domains
    Compare(commands::CompareArgs),
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Reduce(args) => commands::cmd_reduce(args),
        Command::Modes(args) => commands::cmd_modes(args),
        Command::Fit(args) => commands::cmd_fit(args),
        Command::Simulate(args) => commands::cmd_simulate(args),
        Command::Compare(args) => commands::cmd_compare(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Algorithm(message)) => {
            log::error!("{message}");
            ExitCode::from(1)
        }
        Err(Failure::Config(message)) => {
            log::error!("{message}");
            ExitCode::from(2)
        }
    }
}
