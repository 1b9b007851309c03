//! Command-line front end: ingest hub-style CSVs, solve, score, report.
//!
//! Exit status is 0 on success, 2 for malformed input or flags, 3 when the
//! allocation solver fails and 1 for I/O failures.

use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;
mod error;

use args::{Cli, Command, LabCommand};
use error::CliError;

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Allocate { input, k, solver, output } => commands::allocate(&input, k, &solver, &output),
        Command::Score { input, truth, k, loss, ranks, solver, output } => {
            commands::score(&input, &truth, k, loss, ranks.as_deref(), &solver, &output)
        }
        Command::Ias { input, truth, weight, k_min, k_max, k_step, loss, solver, output } => {
            commands::ias(&input, &truth, weight, (k_min, k_max, k_step), loss, &solver, &output)
        }
        Command::Wis { input, truth, output } => commands::wis(&input, &truth, &output),
        Command::Sweep { input, truth, k_min, k_max, k_step, loss, solver, output } => {
            commands::sweep(&input, &truth, (k_min, k_max, k_step), loss, &solver, &output)
        }
        Command::Lab { experiment } => match experiment {
            LabCommand::Propriety { truth, other, run } => commands::lab_propriety(&truth, &other, &run),
            LabCommand::Posthoc { truth, run } => commands::lab_posthoc(&truth, &run),
        },
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
