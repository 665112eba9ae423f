use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "survseg", version, about = "Breakpoint detection in ordered survival data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit a model with a fixed number of segments.
    Fit(FitArgs),
    /// Fit K = 1..=k-max and select by BIC.
    Sweep(SweepArgs),
    /// Percentile bootstrap intervals for a fixed number of segments.
    Bootstrap(BootstrapArgs),
    /// Generate a synthetic cohort.
    Simulate(SimulateArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum FamilyArg {
    Exponential,
    Weibull,
    Pch,
    Cox,
}

impl From<FamilyArg> for survseg::FamilyKind {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Exponential => survseg::FamilyKind::Exponential,
            FamilyArg::Weibull => survseg::FamilyKind::Weibull,
            FamilyArg::Pch => survseg::FamilyKind::Pch,
            FamilyArg::Cox => survseg::FamilyKind::Cox,
        }
    }
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Input CSV with a header row.
    pub input: PathBuf,
    #[arg(long)]
    pub order_col: Option<String>,
    #[arg(long)]
    pub time_col: Option<String>,
    #[arg(long)]
    pub event_col: Option<String>,
    #[arg(long)]
    pub entry_col: Option<String>,
    /// Comma-separated covariate columns.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Comma-separated PCH cut points.
    #[arg(long, value_delimiter = ',')]
    pub cuts: Option<Vec<f64>>,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Prior jump probability.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Forbid breakpoints between subjects sharing an order key.
    #[arg(long)]
    pub forbid_ties: bool,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file with defaults; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum SyntheticArg {
    Null,
    TwoBreakpoint,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["scenario", "table", "synthetic"])))]
pub struct SimulateArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub scenario: Option<u8>,
    /// TOML hazard table with `cuts`, `rates` and `betas`.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub synthetic: Option<SyntheticArg>,
    /// Comma-separated block sizes; defaults to an even split of `n`.
    #[arg(long, value_delimiter = ',')]
    pub block_sizes: Option<Vec<usize>>,
    #[arg(long, default_value_t = 3000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}
