//! Command-line front end.
//!
//! Exit codes: 0 success, 1 input error, 2 model infeasible, 3 numerical
//! check failure.

mod commands;
pub mod config;
pub mod selfcheck;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{HedgeRow, RunManifest, ValidateReport};
pub use config::{ConfigError, ExperimentConfig, OutputConfig, OutputFormat, RunConfig, RunMethod};

use crate::error::EngineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(i32)]
pub enum ExitCode {
    Ok = 0,
    Input = 1,
    Infeasible = 2,
    CheckFailed = 3,
}

#[derive(Debug, Parser)]
#[command(name = "bns-hedge", version, about = "LRM hedging under BNS stochastic volatility")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the exponential-moment assumption and report the kappa interval.
    Validate,
    /// Simulate paths and write terminal values.
    Simulate,
    /// Estimate the LRM hedge ratio.
    Hedge,
    /// Run a discrete hedging backtest.
    Backtest,
    /// Run the built-in invariant suite.
    #[command(alias = "check")]
    Selfcheck {
        /// Flip the sign of the premium term in the density exponent.
        #[arg(long, hide = true)]
        inject_bug: bool,
    },
}

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError {
            code: ExitCode::Input,
            message: message.into(),
        }
    }
}

fn engine_exit(e: &EngineError) -> ExitCode {
    match e {
        EngineError::Infeasible(_) => ExitCode::Infeasible,
        EngineError::Quadrature { .. } => ExitCode::CheckFailed,
        EngineError::AtPath { source, .. } => engine_exit(source),
        _ => ExitCode::Input,
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        CliError {
            code: engine_exit(&e),
            message: e.to_string(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Engine(inner) => inner.into(),
            other => CliError::input(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::input(e.to_string())
    }
}

/// Parse `args`, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::Input as i32
            } else {
                ExitCode::Ok as i32
            };
        }
    };
    if let Some(n) = cli.common.threads {
        // a global pool can only be installed once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match commands::dispatch(&cli) {
        Ok(code) => code as i32,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code as i32
        }
    }
}
