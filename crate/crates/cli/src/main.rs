mod commands;
mod io;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Offset-complexity toolkit: margin certification, star fits, offset
/// complexity, risk bounds and rate experiments.
#[derive(Debug, Parser)]
#[command(name = "offset", version)]
pub struct Cli {
    /// Base seed for all randomness (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (directory for `experiment`); stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON settings file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the inequality and loss check suites.
    Verify(VerifyArgs),
    /// Fit the star estimator on a CSV sample.
    Fit(FitArgs),
    /// Monte Carlo offset complexity of a finite class on a CSV sample.
    Offset(OffsetArgs),
    /// Evaluate a risk bound.
    Bound(BoundArgs),
    /// Run a synthetic rate experiment.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteName {
    Margins,
    Losses,
    All,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suite: Option<SuiteName>,
    /// Random trials per check.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// Grid points per axis for modulus certification.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    /// Random finite classes for the star-margin check.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub star_instances: Option<usize>,
    /// Tolerance for inequality checks.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossName {
    Square,
    Ploss,
    Log,
    Glm,
}

#[derive(Debug, Args, Serialize)]
pub struct LossArgs {
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossName>,
    /// Exponent of the p-loss.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Bound B on predictions and targets (square and p-loss).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    /// Likelihood floor of the log and GLM losses.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
    /// Number of labels for the GLM loss.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// CSV sample with header x1,...,xd,y.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// JSON class specification.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub loss: LossArgs,
    /// Mix class outputs toward the uniform likelihood at this level.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regularize: Option<f64>,
    /// Random candidates for linear-ball classes.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidates: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum OffsetKindName {
    MuD,
    ExpConcave,
    UniformConvex,
}

#[derive(Debug, Args, Serialize)]
pub struct OffsetArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub loss: LossArgs,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regularize: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<OffsetKindName>,
    /// Mixing levels per member pair.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_levels: Option<usize>,
    /// Reference member index (default: the empirical risk minimizer).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<usize>,
    /// Include the per-draw suprema.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub full: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Packing,
    Chaining,
    Glm,
    Bigglm,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long, value_enum)]
    pub kind: BoundKind,
    /// JSON parameter file.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Single parameter as key=value (JSON value); overrides the file.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub param: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct ExperimentArgs {
    /// logistic_rate, ploss_rate, nonconvex_gap or bound_vs_empirical.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_size: Option<usize>,
}

/// Usage errors exit with 2, everything else with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

macro_rules! runtime_from {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.into())
            }
        })*
    };
}

runtime_from!(anyhow::Error, std::io::Error, serde_json::Error, csv::Error);

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
