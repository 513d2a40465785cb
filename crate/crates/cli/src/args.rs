use std::path::PathBuf;

use bimatch_core::exposure::ExposureRule;
use bimatch_core::matcher::{Backend, Method, SolverOptions, TuningParams};
use bimatch_core::simulator::{Kernel, NaiveKind, Scenario, Sparsity};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const VERSION: &str = env!("BIMATCH_VERSION");

#[derive(Parser, Debug)]
#[command(name = "bimatch", version = VERSION, about = "Bipartite causal inference by matching over time")]
pub struct Cli {
    /// Flat key = value file of default flags; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Monte-Carlo study on a synthetic scenario.
    Simulate(SimulateArgs),
    /// Match one outcome unit of a panel.
    Match(MatchArgs),
    /// Effect estimate and Wald inference from a match document.
    Estimate(EstimateArgs),
    /// Benjamini-Hochberg global test over per-unit reports.
    TestGlobal(TestGlobalArgs),
    /// Full pipeline over every requested outcome unit.
    Run(RunArgs),
    /// Reruns a published simulation table and checks the tolerances.
    Reproduce(ReproduceArgs),
    /// Worst-case bias bound calculator.
    Bound(BoundArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum BackendArg {
    Auto,
    Exact,
    Heuristic,
}

#[derive(Args, Debug, Clone)]
pub struct TuningArgs {
    /// Cap on the mean time imbalance.
    #[arg(long, default_value_t = 2.0)]
    pub delta: f64,
    /// Cap on the mean standardized covariate imbalance; `inf` disables it.
    #[arg(long, default_value_t = 0.05)]
    pub delta_prime: f64,
    /// Per-match cap on the time gap.
    #[arg(long, default_value_t = 6)]
    pub eps: u32,
    /// Optional per-match cap on covariate gaps.
    #[arg(long)]
    pub delta_dprime: Option<f64>,
    /// Interval length of the auxiliary smooth-balance columns.
    #[arg(long, requires = "kpow")]
    pub ell: Option<f64>,
    /// Polynomial order of the auxiliary columns.
    #[arg(long, requires = "ell")]
    pub kpow: Option<u32>,
    /// Match on time only.
    #[arg(long)]
    pub unadjusted: bool,
    #[arg(long, value_enum, default_value = "auto")]
    pub backend: BackendArg,
    /// Seed of the local search.
    #[arg(long, default_value_t = 0)]
    pub solver_seed: u64,
}

impl TuningArgs {
    pub fn params(&self) -> TuningParams {
        TuningParams {
            delta: self.delta,
            delta_prime: self.delta_prime,
            eps: self.eps,
            delta_dprime: self.delta_dprime,
            ell: self.ell,
            kpow: self.kpow,
            adjust: !self.unadjusted,
        }
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            backend: match self.backend {
                BackendArg::Auto => Backend::Auto,
                BackendArg::Exact => Backend::Exact,
                BackendArg::Heuristic => Backend::Heuristic,
            },
            seed: self.solver_seed,
            ..SolverOptions::default()
        }
    }
}

fn parse_naive(s: &str) -> Result<NaiveKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "t" | "n-t" => Ok(NaiveKind::T),
        "j" | "n-j" => Ok(NaiveKind::J),
        "all" | "n-all" => Ok(NaiveKind::All),
        other => Err(format!("unknown naive comparator {other:?} (t|j|all)")),
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, default_value = "a")]
    pub scenario: Scenario,
    #[arg(long, default_value = "medium")]
    pub sparsity: Sparsity,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_values = ["1-1", "1-2", "1-1/2"])]
    pub methods: Vec<Method>,
    /// Naive comparators (t, j, all); defaults to those sharing the estimand.
    #[arg(long, value_delimiter = ',', value_parser = parse_naive)]
    pub naive: Option<Vec<NaiveKind>>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "printed")]
    pub kernel: Kernel,
    /// Period-specific effects with time-varying confounding.
    #[arg(long)]
    pub heterogeneous: bool,
    /// AR(1) outcome errors with this autocorrelation.
    #[arg(long)]
    pub ar1: Option<f64>,
    #[arg(long)]
    pub network_confounding: bool,
    #[arg(long)]
    pub null_effects: bool,
    /// Overrides the calibrated exposure threshold.
    #[arg(long)]
    pub threshold: Option<u32>,
    /// Redraws unit locations in every replication.
    #[arg(long)]
    pub free_layout: bool,
    /// One-based outcome unit studied.
    #[arg(long, default_value_t = 1)]
    pub unit: usize,
    /// Tests every outcome unit and reports global rejection rates.
    #[arg(long)]
    pub global: bool,
    /// Also writes the first replication as a panel directory.
    #[arg(long)]
    pub write_panel: bool,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

#[derive(Args, Debug)]
pub struct MatchArgs {
    /// Panel directory.
    #[arg(long)]
    pub data: PathBuf,
    /// One-based outcome unit.
    #[arg(long)]
    pub unit: usize,
    #[arg(long, default_value = "1-1")]
    pub method: Method,
    /// `threshold:d=K` or `proportion:th=X`; defaults to supplied exposures.
    #[arg(long)]
    pub exposure: Option<ExposureRule>,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    /// Match document written by `match` or `run`.
    #[arg(long)]
    pub from: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TestGlobalArgs {
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Per-unit reports carrying `unit` and `p_value`.
    #[arg(long, num_args = 1.., required = true)]
    pub from: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// One-based outcome units (default: all).
    #[arg(long, value_delimiter = ',')]
    pub units: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', default_values = ["1-1", "1-2", "1-1/2"])]
    pub methods: Vec<Method>,
    #[arg(long)]
    pub exposure: Option<ExposureRule>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    pub tuning: TuningArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReproduceArgs {
    /// 2, 3, d1 (or s1), d5 or d6.
    #[arg(long)]
    pub table: String,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BoundArgs {
    #[command(subcommand)]
    pub kind: BoundKind,
}

#[derive(Subcommand, Debug)]
pub enum BoundKind {
    /// Outcome linear in time and covariates.
    Linear {
        #[arg(long)]
        beta_time: f64,
        /// `‖β‖₁` of the outcome-unit covariates.
        #[arg(long, default_value_t = 0.0)]
        norm_w: f64,
        #[arg(long, default_value_t = 0.0)]
        norm_x: f64,
        #[arg(long, default_value_t = 0.0)]
        norm_p: f64,
        #[arg(long, default_value_t = 2.0)]
        delta: f64,
        #[arg(long, default_value_t = 0.05)]
        delta_prime: f64,
    },
    /// Additive outcome with bounded derivatives.
    Smooth {
        /// Derivative cap.
        #[arg(long)]
        c: f64,
        /// Differentiability order.
        #[arg(long)]
        k: u32,
        #[arg(long)]
        ell: f64,
        /// Number of periods (default: from `--data`).
        #[arg(long)]
        horizon: Option<usize>,
        /// Covariate supports as `lo:hi`, one per covariate.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        support: Vec<String>,
        /// Panel directory to read supports and horizon from.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        unit: usize,
        #[arg(long, default_value_t = 2.0)]
        delta: f64,
        #[arg(long, default_value_t = 0.05)]
        delta_prime: f64,
    },
}
