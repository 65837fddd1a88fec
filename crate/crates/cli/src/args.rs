use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "multibin", version, about = "Bayesian superiority decisions for trials with correlated binary outcomes")]
pub struct Cli {
    /// TOML file with default values for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads for simulation (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Posterior superiority probability and decision from observed counts.
    Decide(DecideArgs),
    /// A priori sample size per arm.
    Samplesize(SampleSizeArgs),
    /// Efficiency weights for the compensatory rule.
    Weights(WeightsArgs),
    /// Replicated trial simulation.
    Simulate(SimulateArgs),
    /// Threshold calibration under a null mechanism.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignArg {
    Fixed,
    Gs,
    Adaptive,
}

/// Flags shared by several subcommands. Every field may also come from
/// the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Seed for every stochastic step; required where randomness is used.
    #[arg(long)]
    pub seed: Option<u64>,
    /// One-sided Type I error rate.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Posterior draws per analysis.
    #[arg(long)]
    pub draws: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DecideArgs {
    /// Response file: `arm,pattern,count` or `arm,bits` records.
    #[arg(long)]
    pub counts: Option<PathBuf>,
    /// Rules, comma separated: single[k], any, all, ce, cuu, cuc, comp.
    #[arg(long)]
    pub rule: Option<String>,
    /// Weights for `comp`, comma separated.
    #[arg(long)]
    pub weights: Option<String>,
    /// Prior: `ref`, `jeffreys`, or a TOML prior file.
    #[arg(long)]
    pub prior: Option<String>,
    /// Decision threshold (default: derived from alpha and the rule).
    #[arg(long)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SampleSizeArgs {
    /// Rule: single[k], any, all, ce, cuu, cuc, comp.
    #[arg(long)]
    pub rule: Option<String>,
    #[arg(long)]
    pub weights: Option<String>,
    /// Reference mechanism id such as `4.2`.
    #[arg(long)]
    pub dgm: Option<String>,
    /// Anticipated experimental margins, comma separated.
    #[arg(long)]
    pub theta_e: Option<String>,
    /// Anticipated control margins, comma separated.
    #[arg(long)]
    pub theta_c: Option<String>,
    /// Anticipated correlation within each arm.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Type II error rate.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Sample sizes of every reference mechanism and rule.
    #[arg(long = "paper-tables")]
    pub full_grid: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    /// Expected frequencies per arm in `arm,pattern,count` records.
    #[arg(long)]
    pub counts: Option<PathBuf>,
    /// Reference mechanism whose expected frequencies at `--n` are used.
    #[arg(long)]
    pub dgm: Option<String>,
    /// Subjects per arm for `--dgm`.
    #[arg(long, default_value_t = 1000)]
    pub n: u64,
    /// Closed-form posterior moments instead of Monte Carlo.
    #[arg(long)]
    pub exact: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Reference mechanism id such as `4.2`.
    #[arg(long)]
    pub dgm: Option<String>,
    /// Rule: single, any, all, c-e, c-uu, c-uc.
    #[arg(long)]
    pub rule: Option<String>,
    #[arg(long, value_enum)]
    pub design: Option<DesignArg>,
    /// Prior set 1 to 6, or `ref` / `jeffreys`.
    #[arg(long)]
    pub prior: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Override the planned sample size per arm.
    #[arg(long)]
    pub n: Option<u64>,
    /// Override the decision threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Run every reference mechanism with every rule.
    #[arg(long = "paper-tables")]
    pub full_grid: bool,
    /// Disable staged pilot screening of posterior samples.
    #[arg(long)]
    pub no_screening: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Null mechanism (default: the rule's least favourable group, `.1`).
    #[arg(long)]
    pub dgm: Option<String>,
    #[arg(long)]
    pub rule: Option<String>,
    #[arg(long, value_enum)]
    pub design: Option<DesignArg>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Per-arm sample size of a group-sequential design.
    #[arg(long)]
    pub n: Option<u64>,
    /// Disable staged pilot screening of posterior samples.
    #[arg(long)]
    pub no_screening: bool,
    #[command(flatten)]
    pub common: Common,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub threads: Option<usize>,
    pub rule: Option<String>,
    pub weights: Option<String>,
    pub prior: Option<String>,
    pub design: Option<DesignArg>,
    pub reps: Option<usize>,
    pub beta: Option<f64>,
    pub dgm: Option<String>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub draws: Option<usize>,
}

impl Common {
    /// Fills unset flags from `file`.
    pub fn merged(&self, file: &ConfigFile) -> Common {
        Common {
            seed: self.seed.or(file.seed),
            alpha: self.alpha.or(file.alpha),
            out: self.out.clone().or_else(|| file.out.clone()),
            format: self.format.or(file.format),
            draws: self.draws.or(file.draws),
        }
    }
}
