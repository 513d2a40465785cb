//! Scenario generators and Monte-Carlo studies.
//!
//! Every replication regenerates the panel from the seed
//! `study_seed ^ replication`. Unit locations come from a fixed layout seed
//! unless a fresh layout per replication is requested.

mod generate;
pub mod gp;
mod study;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use generate::{gen_covariates, gen_locations, generate, Covariates, Layout, Neighbors, SimData, NEIGHBOR_RADIUS};
pub use gp::Kernel;
pub use study::{
    run_global_study, run_replication, run_study, summarize, summarize_global, GlobalMethodRep, GlobalRepResult,
    GlobalStudy, GlobalSummaryRow, MethodRecord, NaiveKind, ReplicationResult, Study, StudyConfig, SummaryRow, Target,
};

/// Confounding structure of the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// No confounding.
    A,
    /// Time-smooth confounders.
    B,
    /// Location-varying confounders.
    C,
    /// Non-smooth time-varying confounders.
    D,
    /// All of the above.
    E,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [Scenario::A, Scenario::B, Scenario::C, Scenario::D, Scenario::E];

    pub fn letter(self) -> char {
        match self {
            Scenario::A => 'a',
            Scenario::B => 'b',
            Scenario::C => 'c',
            Scenario::D => 'd',
            Scenario::E => 'e',
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Scenario::A),
            "b" => Ok(Scenario::B),
            "c" => Ok(Scenario::C),
            "d" => Ok(Scenario::D),
            "e" => Ok(Scenario::E),
            other => Err(Error::InvalidParameter(format!("unknown scenario {other:?} (a-e)"))),
        }
    }
}

/// Target number of exposed periods of the studied unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sparsity {
    Dense,
    Medium,
    Sparse,
}

impl Sparsity {
    pub const ALL: [Sparsity; 3] = [Sparsity::Dense, Sparsity::Medium, Sparsity::Sparse];

    /// Inclusive band of exposed-period counts at `T = 400`.
    pub fn band(self) -> (usize, usize) {
        match self {
            Sparsity::Dense => (150, 200),
            Sparsity::Medium => (80, 120),
            Sparsity::Sparse => (30, 60),
        }
    }
}

impl fmt::Display for Sparsity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sparsity::Dense => "dense",
            Sparsity::Medium => "medium",
            Sparsity::Sparse => "sparse",
        })
    }
}

impl FromStr for Sparsity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dense" => Ok(Sparsity::Dense),
            "medium" => Ok(Sparsity::Medium),
            "sparse" => Ok(Sparsity::Sparse),
            other => Err(Error::InvalidParameter(format!(
                "unknown sparsity {other:?} (dense|medium|sparse)"
            ))),
        }
    }
}

/// Optional changes to the base scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Variants {
    /// Period-specific effects `1 + ε′ + 0.005(T − t)` with the time-varying
    /// confounders in the outcome.
    pub heterogeneous: bool,
    /// AR(1) outcome errors with this autocorrelation.
    pub ar1_rho: Option<f64>,
    /// Distance-dependent edges in scenario (a).
    pub network_confounding: bool,
    /// Exposure has no effect.
    pub null_effects: bool,
}

/// Deterministic description of one generator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub sparsity: Sparsity,
    /// Interventional units.
    pub n: usize,
    /// Outcome units.
    pub m: usize,
    pub periods: usize,
    pub seed: u64,
    pub variants: Variants,
    pub kernel: Kernel,
    /// Overrides the catalog exposure threshold.
    pub threshold: Option<u32>,
    /// One-based outcome unit studied in single-unit studies.
    pub target_unit: usize,
    /// Seed of the unit locations; `None` redraws them in every replication.
    pub layout_seed: Option<u64>,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, sparsity: Sparsity) -> Self {
        Self {
            scenario,
            sparsity,
            n: 50,
            m: 200,
            periods: 400,
            seed: 42,
            variants: Variants::default(),
            kernel: Kernel::Printed,
            threshold: None,
            target_unit: 1,
            layout_seed: Some(LAYOUT_SEED),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.periods == 0 {
            return Err(Error::InvalidParameter("N, M and T must be at least 1".into()));
        }
        if self.target_unit == 0 || self.target_unit > self.m {
            return Err(Error::InvalidUnit {
                unit: self.target_unit,
                max: self.m,
            });
        }
        if let Some(rho) = self.variants.ar1_rho {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::InvalidParameter(format!("ar1 rho {rho} outside [0, 1)")));
            }
        }
        if self.n > u16::MAX as usize {
            return Err(Error::InvalidParameter("N must fit in 16 bits".into()));
        }
        Ok(())
    }

    /// Seed of replication `rep`.
    pub fn replication_seed(&self, rep: usize) -> u64 {
        self.seed ^ rep as u64
    }

    /// Exposure threshold `d`: the override or the calibrated catalog value.
    pub fn threshold(&self) -> u32 {
        self.threshold.unwrap_or_else(|| {
            catalog_threshold(
                self.scenario,
                self.sparsity,
                self.kernel,
                self.variants.network_confounding,
            )
        })
    }
}

/// Default layout seed of the catalog.
pub const LAYOUT_SEED: u64 = 2022;

/// Thresholds calibrated with [`calibrate_threshold`] at the default sizes
/// and layout, ordered dense, medium, sparse.
pub fn catalog_threshold(scenario: Scenario, sparsity: Sparsity, kernel: Kernel, network_confounding: bool) -> u32 {
    use Scenario::*;
    let row: [u32; 3] = match (scenario, network_confounding, kernel) {
        (A, true, _) => [6, 8, 9],
        (A, false, _) => [5, 6, 7],
        (B, _, Kernel::Printed) => [3, 4, 5],
        (B, _, Kernel::Intended) => [3, 4, 6],
        (C, _, _) => [6, 7, 8],
        (D, _, _) => [5, 7, 9],
        (E, _, _) => [3, 4, 6],
    };
    match sparsity {
        Sparsity::Dense => row[0],
        Sparsity::Medium => row[1],
        Sparsity::Sparse => row[2],
    }
}

/// Result of a threshold search for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold: u32,
    /// Mean exposed count of the target unit for `d = 0, 1, …`.
    pub mean_counts: Vec<f64>,
    /// Share of replications whose count lands in the band at `threshold`.
    pub in_band: f64,
}

/// Bisection on the Monte-Carlo mean exposed count of the target unit for
/// the threshold closest to the centre of the sparsity band.
pub fn calibrate_threshold(spec: &ScenarioSpec, reps: usize) -> Result<Calibration> {
    spec.validate()?;
    if reps == 0 {
        return Err(Error::InvalidParameter(
            "calibration needs at least one replication".into(),
        ));
    }
    let j = spec.target_unit - 1;
    let m = spec.m;
    let sums: Vec<Vec<u16>> = (0..reps)
        .map(|rep| {
            let data = generate(spec, spec.replication_seed(rep), false);
            (0..spec.periods).map(|t| data.counts[t * m + j]).collect()
        })
        .collect();
    let max = sums.iter().flatten().copied().max().unwrap_or(0) as usize + 1;
    let count_at = |d: usize, s: &[u16]| s.iter().filter(|&&c| c as usize >= d).count();
    let mean_counts: Vec<f64> = (0..=max)
        .map(|d| sums.iter().map(|s| count_at(d, s) as f64).sum::<f64>() / reps as f64)
        .collect();
    let (lo, hi) = spec.sparsity.band();
    let centre = (lo + hi) as f64 / 2.0;
    // smallest d whose mean count is at most the centre
    let (mut a, mut b) = (0usize, max);
    while a < b {
        let mid = (a + b) / 2;
        if mean_counts[mid] <= centre {
            b = mid;
        } else {
            a = mid + 1;
        }
    }
    let d = if a > 0 && (mean_counts[a - 1] - centre).abs() < (mean_counts[a] - centre).abs() {
        a - 1
    } else {
        a
    };
    let in_band = sums.iter().filter(|s| (lo..=hi).contains(&count_at(d, s))).count() as f64 / reps as f64;
    Ok(Calibration {
        threshold: d as u32,
        mean_counts,
        in_band,
    })
}
