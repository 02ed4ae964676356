use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ssanova::{DerivativeOrder, WeightFamily};

#[derive(Debug, Parser)]
#[command(
    name = "ssanova",
    version,
    about = "SS-ANOVA kernel ridge regression, derivative estimation and derivative tests"
)]
pub struct Cli {
    /// Worker threads for Gram assembly and bootstrap replicates (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the estimator and write a model summary.
    Fit(FitArgs),
    /// Select λ by the pseudo marginal likelihood.
    Tune(TuneArgs),
    /// Bootstrap test of H0: the β-derivative of the regression function is zero.
    Test(TestArgs),
    /// Run a Monte Carlo experiment on one of the benchmark processes.
    Simulate(SimulateArgs),
    /// Write one synthetic dataset from a benchmark process as CSV.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaArg {
    Auto,
    Fixed(f64),
}

impl FromStr for LambdaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(Self::Fixed(v)),
            _ => Err(format!("expected a positive number or \"auto\", got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightsArg {
    Exp,
    TwoPoint,
}

impl From<WeightsArg> for WeightFamily {
    fn from(w: WeightsArg) -> Self {
        match w {
            WeightsArg::Exp => WeightFamily::Exponential,
            WeightsArg::TwoPoint => WeightFamily::TwoPoint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    /// Every unit-order direction on coordinate subsets of size 1..=q.
    Interactions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Rmse,
    Err,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Name of the response column.
    #[arg(long, default_value = "y")]
    pub response: String,
    /// Map each covariate to x / x_max before fitting.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Sobolev smoothness.
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    /// Highest interaction order (default: number of covariates).
    #[arg(long)]
    pub q: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = 1e-8)]
    pub grid_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub grid_max: f64,
    #[arg(long, default_value_t = 50)]
    pub grid_points: usize,
}

#[derive(Debug, Clone, Args)]
pub struct BootstrapArgs {
    /// Bootstrap replicates.
    #[arg(long = "B")]
    pub bootstrap: Option<usize>,
    /// Evaluation points per statistic.
    #[arg(long = "p", default_value_t = 100)]
    pub points: usize,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "exp")]
    pub weights: WeightsArg,
    /// Random seed; falls back to $SSANOVA_SEED, then 1.
    #[arg(long, env = "SSANOVA_SEED", default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "auto")]
    pub lambda: LambdaArg,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Also write predictions and first derivatives along each axis at this many points.
    #[arg(long)]
    pub predict_grid: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "auto")]
    pub lambda: LambdaArg,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Derivative direction, e.g. 1,0,0.
    #[arg(long, conflicts_with = "suite", required_unless_present = "suite")]
    pub beta: Option<DerivativeOrder>,
    /// Test a whole family of directions against shared bootstrap refits.
    #[arg(long, value_enum)]
    pub suite: Option<Suite>,
    #[command(flatten)]
    pub boot: BootstrapArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DgpArgs {
    /// Benchmark process: 1, 2 or 3.
    #[arg(long)]
    pub dgp: u8,
    /// Signal strength.
    #[arg(long, allow_negative_numbers = true)]
    pub b: f64,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long)]
    pub n: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub dgp: DgpArgs,
    #[arg(long, value_enum)]
    pub metric: MetricArg,
    /// Monte Carlo replicates.
    #[arg(long, default_value_t = 200)]
    pub replicates: usize,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub boot: BootstrapArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub dgp: DgpArgs,
    #[arg(long, env = "SSANOVA_SEED", default_value_t = 1)]
    pub seed: u64,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}
