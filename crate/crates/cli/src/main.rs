//! `ka`: batch experiment runner for the Kob-Andersen lattice gas
//! toolkit. Each subcommand reads an optional JSON configuration,
//! applies command-line overrides, writes its artifacts into an output
//! directory, and records a manifest with content hashes.

mod artifacts;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;
use ka_core::KaError;

pub type DynError = Box<dyn std::error::Error>;

/// Completion state of a subcommand. `Warning` marks runs whose outputs
/// were written but carry a caveat (frozen dynamics, displacement
/// fold-back); search caps that abort a run exit with the same code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Success,
    Warning,
}

const EXIT_WARNING: u8 = 3;

fn main() -> ExitCode {
    let cli = commands::Cli::parse();
    match commands::run(cli) {
        Ok(Exit::Success) => ExitCode::SUCCESS,
        Ok(Exit::Warning) => ExitCode::from(EXIT_WARNING),
        Err(err) => {
            eprintln!("error: {err}");
            if matches!(err.downcast_ref::<KaError>(), Some(KaError::CapExceeded(_))) {
                ExitCode::from(EXIT_WARNING)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
