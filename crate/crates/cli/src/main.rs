//! `linkfield`: fit, evaluate and exercise per-link distance fields.
//!
//! Exit codes: 0 on success (including runs that find no solution), 1 when
//! the input is invalid, 2 on internal failure.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use linkfield_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "linkfield",
    version,
    about = "Per-link Bernstein distance fields for articulated robots"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags every command takes.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// RNG seed; falls back to the config or input file, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: $LINKFIELD_OUT or ./out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with option values; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write 0 in wall-clock columns so reruns are byte-identical.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one field per link of a chain and write a model file.
    Fit(commands::fit::FitArgs),
    /// Score a model against its exact geometry.
    Eval(commands::eval::EvalArgs),
    /// Batch Gauss-Newton contact planning on a lift problem.
    Plan(commands::plan::PlanArgs),
    /// Run reactive collision-avoidance episodes.
    Avoid(commands::avoid::AvoidArgs),
    /// Export the composed distance on a regular grid.
    Grid(commands::grid::GridArgs),
}

/// Failure classes that decide the exit code.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Internal(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Internal(format!("writing CSV: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(format!("config: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Fit(a) => commands::fit::run(a),
        Command::Eval(a) => commands::eval::run(a),
        Command::Plan(a) => commands::plan::run(a),
        Command::Avoid(a) => commands::avoid::run(a),
        Command::Grid(a) => commands::grid::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(2)
        }
    }
}
