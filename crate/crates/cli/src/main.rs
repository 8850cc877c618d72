//! `ldp`: rate functions, deviation bounds and their Monte Carlo and
//! entropy-minimization checks for renewal-reward processes.
//!
//! Exit codes: 0 success, 1 input or I/O error, 2 violated moment
//! hypothesis, 3 infeasible or censored result, 4 `compare` found values
//! outside tolerance.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod compare;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use renewal_ldp::legendre::Side;
use renewal_ldp::Error;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "ldp", version, about = "Large-deviation tools for renewal-reward processes")]
struct Cli {
    /// Worker threads (default: `LDP_WORKERS`, else all cores). Results do
    /// not depend on this value.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Common {
    /// Model JSON (a Hawkes configuration for `hawkes`).
    #[arg(long)]
    pub model: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Master seed for every random stream.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SideArg {
    Upper,
    Lower,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Side {
        match s {
            SideArg::Upper => Side::Upper,
            SideArg::Lower => Side::Lower,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GridArgs {
    /// Explicit comma-separated grid of m values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub m_grid: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.25)]
    pub m_lo: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 4.0)]
    pub m_hi: f64,
    #[arg(long, default_value_t = 16)]
    pub points: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// J and J-bar on a grid of m values.
    RateProfile {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Asymptotic bound on P(Z_t/t >= m + a) or P(Z_t/t <= m - a).
    DeviationBound {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        a: f64,
        #[arg(long, value_enum, default_value = "upper")]
        side: SideArg,
        /// Fixed kappa in (0, 1); optimized when omitted.
        #[arg(long)]
        kappa: Option<f64>,
    },
    /// One path, coupled variants, or an LLN/CLT ensemble.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        t: f64,
        /// Simulate this many endpoints and compare with the normal limit.
        #[arg(long)]
        paths: Option<usize>,
        /// Coupled path with rewards clamped to [-n, n].
        #[arg(long)]
        truncate: Option<f64>,
        /// Coupled path with waiting times shifted by eps.
        #[arg(long)]
        shift: Option<f64>,
    },
    /// Monte Carlo tail probabilities and their fitted exponential slope.
    McTail {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        a: f64,
        #[arg(long, value_enum, default_value = "upper")]
        side: SideArg,
        #[arg(long, value_delimiter = ',', required = true)]
        t_grid: Vec<f64>,
        /// Replications per horizon.
        #[arg(long, default_value_t = 100_000)]
        n: u64,
    },
    /// Decay of P(|Z_t - Z_t^n|/t > 2 delta) or P(|M_t - M_t^eps| > delta t).
    ApproxRate {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "shift")]
        truncate: Option<f64>,
        #[arg(long)]
        shift: Option<f64>,
        #[arg(long)]
        delta: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        t_grid: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        n: u64,
    },
    /// Relative-entropy minimization over sub-probabilities on a discrete
    /// support, compared with J-bar.
    EntropyOracle {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        /// Override theta0 (a number or `inf`).
        #[arg(long)]
        theta0: Option<String>,
    },
    /// Simulate a Hawkes process, extract its cycles and estimate tails.
    Hawkes {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.5)]
        a: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        t_grid: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        n: u64,
        /// Also check path invariants on this many independent paths.
        #[arg(long)]
        check_paths: Option<usize>,
    },
    /// Parse a model, check its hypotheses and print a summary.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Compare two artifacts column by column, or an mc-tail report with a
    /// deviation-bound report.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Absolute tolerance.
        #[arg(long)]
        abs: Option<f64>,
        /// Relative tolerance.
        #[arg(long)]
        rel: Option<f64>,
        /// Comma-separated columns to compare (default: all shared columns).
        #[arg(long, value_delimiter = ',')]
        columns: Option<Vec<String>>,
        /// Write `comparison.json` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Usage(String),
    /// A result that is well defined but infeasible or censored.
    Censored(String),
    Mismatch(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::HypothesisViolation(_)) => 2,
            CliError::Core(Error::Infeasible(_) | Error::InsufficientCycles(_)) | CliError::Censored(_) => 3,
            CliError::Core(_) | CliError::Usage(_) => 1,
            CliError::Mismatch(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) | CliError::Censored(m) | CliError::Mismatch(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

fn workers(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("LDP_WORKERS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("LDP_WORKERS must be a positive integer, got \"{v}\""))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = workers(cli.workers)? {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {n} workers: {e}")))?;
    }
    match cli.command {
        Command::RateProfile { common, grid } => commands::rate_profile(&common, &grid),
        Command::DeviationBound { common, a, side, kappa } => commands::deviation_bound(&common, a, side, kappa),
        Command::Simulate { common, t, paths, truncate, shift } => commands::simulate(&common, t, paths, truncate, shift),
        Command::McTail { common, a, side, t_grid, n } => commands::mc_tail(&common, a, side, &t_grid, n),
        Command::ApproxRate { common, truncate, shift, delta, t_grid, n } => {
            commands::approx_rate(&common, truncate, shift, delta, &t_grid, n)
        }
        Command::EntropyOracle { common, grid, theta0 } => commands::entropy_oracle(&common, &grid, theta0.as_deref()),
        Command::Hawkes { common, a, t_grid, n, check_paths } => commands::hawkes(&common, a, &t_grid, n, check_paths),
        Command::Validate { common } => commands::validate(&common),
        Command::Compare { a, b, abs, rel, columns, out } => compare::run(&a, &b, abs, rel, columns.as_deref(), out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ldp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
