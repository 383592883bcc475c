//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical
//! failure, 4 diverged training.

mod commands;
mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::linalg::FlopConvention;

pub use config::{parse_compare_config, parse_run_config, CompareConfig, OutputFormat, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

/// Environment variable that replaces the seed of a config file, or the
/// default seed of a command when `--seed` is not given.
pub const SEED_ENV: &str = "MUDKIT_SEED";

#[derive(Debug, Parser)]
#[command(name = "mudkit", version, about = "Matrix whitening operators, optimizers and checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Whiten a random matrix with a prescribed condition number; writes JSON.
    Whiten(WhitenArgs),
    /// Trace the Gram-space map from a random unit-diagonal SPD matrix; writes CSV.
    Trace(TraceArgs),
    /// Compare the MUD inner-congruence spectrum with the symmetric
    /// Gauss-Seidel preconditioned spectrum; writes JSON.
    SgsCheck(SgsArgs),
    /// Time whitening operators; writes CSV.
    Bench(BenchArgs),
    /// Train on a synthetic task from a JSON config; writes CSV or JSON.
    Train(ConfigArgs),
    /// Run several training configs and report time to a target loss; writes JSON.
    Compare(ConfigArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WhitenOp {
    Mud,
    Muon,
    Polar,
    Cholqr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    Table,
    Strict,
}

impl From<ConventionArg> for FlopConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Table => FlopConvention::Table,
            ConventionArg::Strict => FlopConvention::Strict,
        }
    }
}

#[derive(Debug, Args)]
pub struct WhitenArgs {
    #[arg(long, value_enum)]
    pub op: WhitenOp,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub passes: u64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub ns_iters: u64,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
    pub rows: u64,
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u64).range(1..))]
    pub cols: u64,
    /// Condition number of the generated input.
    #[arg(long, default_value_t = 1.0)]
    pub cond: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = ConventionArg::Table)]
    pub flop_convention: ConventionArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub dim: u64,
    /// Off-diagonal entries are uniform in [-eps0, eps0].
    #[arg(long)]
    pub eps0: f64,
    #[arg(long, default_value_t = 10)]
    pub passes: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SgsArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub dim: u64,
    /// Off-diagonal scale; defaults to 0.5/(dim-1).
    #[arg(long)]
    pub eps0: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated operators: mudP, muonS, polar, cholqr.
    #[arg(long, value_delimiter = ',', default_value = "mud1,mud2,muon5")]
    pub ops: Vec<String>,
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u64).range(1..))]
    pub rows: u64,
    #[arg(long, default_value_t = 1024, value_parser = clap::value_parser!(u64).range(1..))]
    pub cols: u64,
    #[arg(long, default_value_t = 10.0)]
    pub cond: f64,
    #[arg(long, default_value_t = 5)]
    pub repeats: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output file; overrides `output_path` in the config. Stdout if neither is set.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(Error),
    Diverged { step: usize, loss: f64 },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Diverged { .. } => EXIT_DIVERGED,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::Diverged { step, loss } => {
                write!(f, "training diverged at step {step}: loss = {loss}")
            }
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::DuplicateName(_) => CliError::Usage(e.to_string()),
            Error::Diverged { step, loss } => CliError::Diverged { step, loss },
            _ => CliError::Numerical(e),
        }
    }
}

/// Parse arguments, run the command, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("mudkit: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Whiten(a) => commands::whiten(&a),
        Command::Trace(a) => commands::trace(&a),
        Command::SgsCheck(a) => commands::sgs_check(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Train(a) => commands::train(&a),
        Command::Compare(a) => commands::compare(&a),
    }
}

/// `MUDKIT_SEED` if set.
pub fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={s} is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::Usage(format!("{SEED_ENV}: {e}"))),
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    match flag {
        Some(s) => Ok(s),
        None => Ok(env_seed()?.unwrap_or(0)),
    }
}

fn write_output(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Usage(format!("cannot write to stdout: {e}")))
        }
    }
}
