mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use crate::args::Cli;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config file; exit code 2.
    Config(String),
    /// Anything that went wrong while running; exit code 1.
    Run(fpgm::FpgmError),
}

impl From<fpgm::FpgmError> for CliError {
    fn from(e: fpgm::FpgmError) -> Self {
        match e {
            fpgm::FpgmError::InvalidInput(msg) => CliError::Config(msg),
            other => CliError::Run(other),
        }
    }
}

/// Whether every item was processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Complete,
    Partial,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FPGM_LOG", "warn")).init();
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match commands::run(cli, &matches) {
        Ok(Outcome::Complete) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(1),
        Err(CliError::Config(msg)) => {
            eprintln!("fpgm: configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(e)) => {
            eprintln!("fpgm: {e}");
            ExitCode::from(1)
        }
    }
}
