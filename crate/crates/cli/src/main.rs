mod commands;
mod config;
mod plot;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Method;
use plot::Field;

/// Usage errors exit with 2, everything else with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(m) | Self::Failure(m) => f.write_str(m),
        }
    }
}

impl From<rapopt::Error> for CliError {
    fn from(e: rapopt::Error) -> Self {
        Self::Failure(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Failure(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "rapopt", version, about = "Generate instances, run solvers and report convergence")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded instance and write its files and descriptor.
    Gen(GenArgs),
    /// Run a solver for one or more seeds and write CSV/JSON reports.
    Run(RunArgs),
    /// Pick the inner-iteration factor for RapGrad from short runs.
    Tune(TuneArgs),
    /// Print a theoretical schedule and check its conditions.
    Validate(ValidateArgs),
    /// Render trajectory CSVs as an SVG line chart.
    Plot(PlotArgs),
    /// Compute the (ε, δ) certificate of a point.
    Certify(CertifyArgs),
}

#[derive(Args)]
pub struct GenArgs {
    #[arg(long)]
    pub family: rapopt::generators::Family,
    /// Components (scad-ls) or blocks including the last one (compressed-sensing).
    #[arg(long)]
    pub m: usize,
    /// Columns (scad-ls) or constraint rows (compressed-sensing).
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub block_dim: Option<usize>,
    #[arg(long)]
    pub sparsity: Option<f64>,
    /// Nonzeros in the ground-truth signal.
    #[arg(long)]
    pub nnz: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Penalty weight.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Target directory; defaults to `<out dir>/<family>-m<m>-n<n>-seed<seed>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct RunArgs {
    /// Experiment config JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Instance descriptor (`instance.json`).
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Outer iterations.
    #[arg(long)]
    pub k: Option<usize>,
    /// Multiplier on the theoretical inner iteration count.
    #[arg(long)]
    pub s_factor: Option<f64>,
    /// Explicit inner iteration count.
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub output_rule: Option<String>,
    #[arg(long)]
    pub inner_constant: Option<String>,
    #[arg(long)]
    pub max_passes: Option<f64>,
    #[arg(long)]
    pub stop_tol: Option<f64>,
    #[arg(long)]
    pub record_every: Option<f64>,
    /// Baseline parameter `key=value` (repeatable).
    #[arg(long = "param", value_parser = parse_param)]
    pub params: Vec<(String, f64)>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Add the (ε, δ) certificate of the output to each summary.
    #[arg(long)]
    pub certificate: bool,
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let v: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
    Ok((k.to_string(), v))
}

#[derive(Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = rapopt::baselines::DEFAULT_FACTORS)]
    pub factors: Vec<f64>,
    /// Pass budget per candidate.
    #[arg(long, default_value_t = rapopt::baselines::DEFAULT_BUDGET_PASSES)]
    pub budget: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub inner_constant: Option<String>,
    /// Write the result as JSON to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ScheduleKind {
    Ragrad,
    Radual,
}

#[derive(Args)]
pub struct ValidateArgs {
    #[arg(long, value_enum)]
    pub kind: ScheduleKind,
    /// Components (ragrad) or blocks including the last one (radual).
    #[arg(long)]
    pub m: usize,
    #[arg(long = "L")]
    pub lipschitz: f64,
    #[arg(long)]
    pub mu: f64,
    /// Largest reformulated block norm (radual only).
    #[arg(long)]
    pub abar: Option<f64>,
    #[arg(long)]
    pub inner_constant: Option<String>,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args)]
pub struct PlotArgs {
    /// Trajectory CSVs, one series each.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Field::Objective)]
    pub y: Field,
    #[arg(long)]
    pub logy: bool,
    /// Series labels, comma separated; defaults to file stems.
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
    #[arg(long)]
    pub title: Option<String>,
    /// Output SVG; defaults to `<out dir>/plot-<field>.svg`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Per-seed summary JSON from `run`, providing `x` and `center`.
    #[arg(long, conflicts_with_all = ["point", "center"])]
    pub summary: Option<PathBuf>,
    /// Point file (one value per line after a length header).
    #[arg(long, requires = "center")]
    pub point: Option<PathBuf>,
    /// Subproblem center file, same format as `--point`.
    #[arg(long, requires = "point")]
    pub center: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Gen(a) => commands::gen(&a),
        Command::Run(a) => commands::run(&a),
        Command::Tune(a) => commands::tune(&a),
        Command::Validate(a) => commands::validate(&a),
        Command::Plot(a) => commands::plot(&a),
        Command::Certify(a) => commands::certify(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Usage(_) => 2,
                CliError::Failure(_) => 1,
            })
        }
    }
}
