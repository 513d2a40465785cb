//! Reduced-scale reproductions of the simulation tables with the published
//! numbers and pass/fail tolerances alongside.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::TuningParams;
use crate::simulator::{
    run_global_study, run_study, summarize, GlobalSummaryRow, NaiveKind, Scenario, ScenarioSpec, Sparsity, StudyConfig,
    SummaryRow, Target,
};

/// Reproducible tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table {
    /// Single-unit estimation under the five scenarios.
    Single,
    /// Global null test over all outcome units.
    Global,
    /// Matching that balances time only.
    Unadjusted,
    /// Period-specific effects.
    Heterogeneous,
    /// Autocorrelated outcome errors.
    Autocorrelated,
}

impl Table {
    pub const ALL: [Table; 5] = [
        Table::Single,
        Table::Global,
        Table::Unadjusted,
        Table::Heterogeneous,
        Table::Autocorrelated,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Table::Single => "2",
            Table::Global => "3",
            Table::Unadjusted => "d1",
            Table::Heterogeneous => "d5",
            Table::Autocorrelated => "d6",
        }
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Table {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "2" => Ok(Table::Single),
            "3" => Ok(Table::Global),
            "d1" | "s1" => Ok(Table::Unadjusted),
            "d5" => Ok(Table::Heterogeneous),
            "d6" => Ok(Table::Autocorrelated),
            _ => Err(Error::UnknownTable(s.to_string())),
        }
    }
}

/// Published bias, MSE, coverage (%) and matched proportion (%).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PublishedCell {
    pub bias: f64,
    pub mse: Option<f64>,
    pub coverage: f64,
    pub prop: Option<f64>,
}

const fn cell(bias: f64, mse: f64, coverage: f64, prop: Option<f64>) -> PublishedCell {
    PublishedCell {
        bias,
        mse: Some(mse),
        coverage,
        prop,
    }
}

/// Published multi-unit row: mean estimate, individual rejection rate, rate
/// of min p below α, FDR global rejection rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PublishedGlobal {
    pub mean_estimate: f64,
    pub individual_rejection: f64,
    pub min_p_rejection: f64,
    pub global_rejection: f64,
}

const METHODS: [&str; 3] = ["1-1", "1-1/2", "1-2"];

/// Medium-sparsity rows of the single-unit table, in the order
/// N-t, N-j, N-all, 1-1, 1-1/2, 1-2.
fn published_single(scenario: Scenario) -> [(&'static str, PublishedCell); 6] {
    let rows = match scenario {
        Scenario::A => [
            cell(-0.01, 0.013, 95.0, None),
            cell(0.00, 0.316, 94.8, None),
            cell(0.00, 0.001, 95.2, None),
            cell(-0.01, 0.020, 95.4, Some(100.0)),
            cell(-0.01, 0.017, 96.2, Some(100.0)),
            cell(-0.01, 0.016, 95.4, Some(90.8)),
        ],
        Scenario::B => [
            cell(-0.95, 1.294, 11.8, None),
            cell(0.00, 0.054, 93.4, None),
            cell(-0.94, 0.886, 0.0, None),
            cell(0.00, 0.024, 92.8, Some(85.1)),
            cell(0.00, 0.022, 94.2, Some(85.1)),
            cell(0.00, 0.024, 95.0, Some(59.9)),
        ],
        Scenario::C => [
            cell(0.00, 0.023, 94.6, None),
            cell(-3.82, 28.191, 81.6, None),
            cell(-3.55, 13.042, 0.0, None),
            cell(0.00, 0.037, 95.0, Some(100.0)),
            cell(0.01, 0.033, 94.2, Some(100.0)),
            cell(0.00, 0.032, 94.0, Some(97.4)),
        ],
        Scenario::D => [
            cell(-1.23, 1.572, 0.0, None),
            cell(0.00, 0.042, 94.4, None),
            cell(-1.24, 1.551, 0.0, None),
            cell(-0.05, 0.024, 98.4, Some(85.0)),
            cell(-0.05, 0.024, 98.2, Some(85.0)),
            cell(-0.04, 0.025, 97.6, Some(59.4)),
        ],
        Scenario::E => [
            cell(-2.6, 7.092, 0.0, None),
            cell(-1.88, 6.566, 78.6, None),
            cell(-3.72, 13.869, 0.0, None),
            cell(-0.06, 0.033, 98.0, Some(94.1)),
            cell(-0.06, 0.032, 97.2, Some(94.1)),
            cell(-0.06, 0.032, 98.6, Some(71.0)),
        ],
    };
    let labels = ["N-t", "N-j", "N-all", METHODS[0], METHODS[1], METHODS[2]];
    std::array::from_fn(|k| (labels[k], rows[k]))
}

/// Medium-sparsity rows of the unadjusted-matching table.
fn published_unadjusted(scenario: Scenario) -> [(&'static str, PublishedCell); 3] {
    let rows = match scenario {
        Scenario::A => [
            cell(0.00, 0.02, 94.8, Some(100.0)),
            cell(0.00, 0.017, 95.0, Some(100.0)),
            cell(-0.01, 0.016, 95.4, Some(90.8)),
        ],
        Scenario::B => [
            cell(0.00, 0.024, 93.6, Some(85.1)),
            cell(0.00, 0.022, 94.6, Some(85.1)),
            cell(0.00, 0.025, 93.6, Some(59.9)),
        ],
        Scenario::C => [
            cell(0.01, 0.041, 93.6, Some(100.0)),
            cell(0.01, 0.038, 93.6, Some(100.0)),
            cell(0.00, 0.030, 92.2, Some(97.4)),
        ],
        Scenario::D => [
            cell(-0.37, 0.19, 60.8, Some(86.1)),
            cell(-0.37, 0.19, 59.8, Some(86.1)),
            cell(-0.41, 0.235, 59.2, Some(63.0)),
        ],
        Scenario::E => [
            cell(-0.59, 0.424, 33.0, Some(94.5)),
            cell(-0.59, 0.414, 36.8, Some(94.5)),
            cell(-0.64, 0.495, 32.4, Some(73.7)),
        ],
    };
    std::array::from_fn(|k| (METHODS[k], rows[k]))
}

/// Heterogeneous-effect rows for one target, in the order N-t, 1-1, 1-1/2, 1-2.
fn published_heterogeneous(scenario: Scenario, target: Target) -> Vec<(&'static str, PublishedCell)> {
    let rows: Vec<PublishedCell> = match (scenario, target) {
        (Scenario::B, Target::AllTime) => vec![
            cell(-0.62, 0.45, 29.2, None),
            cell(0.41, 0.21, 58.6, Some(85.1)),
            cell(0.41, 0.21, 56.4, Some(85.1)),
            cell(0.30, 0.14, 83.0, Some(59.9)),
        ],
        (Scenario::B, Target::Exposed) => vec![
            cell(-1.09, 1.26, 1.4, None),
            cell(-0.07, 0.04, 97.6, None),
            cell(-0.06, 0.03, 97.0, None),
            cell(-0.16, 0.07, 94.6, None),
        ],
        (Scenario::B, Target::Matched) => vec![
            cell(0.00, 0.03, 98.2, None),
            cell(0.01, 0.03, 99.4, None),
            cell(0.01, 0.03, 98.8, None),
        ],
        (Scenario::D, Target::AllTime) => vec![
            cell(-0.85, 0.79, 4.0, None),
            cell(0.25, 0.10, 83.0, Some(85.1)),
            cell(0.25, 0.10, 84.4, Some(85.1)),
            cell(0.13, 0.06, 96.2, Some(59.4)),
        ],
        (Scenario::D, Target::Exposed) => vec![
            cell(-1.22, 1.55, 0.0, None),
            cell(-0.12, 0.04, 97.0, None),
            cell(-0.12, 0.04, 96.8, None),
            cell(-0.24, 0.09, 92.8, None),
        ],
        (Scenario::D, Target::Matched) => vec![
            cell(-0.03, 0.03, 99.2, None),
            cell(-0.03, 0.02, 99.6, None),
            cell(-0.04, 0.02, 98.8, None),
        ],
        _ => Vec::new(),
    };
    let labels: &[&'static str] = if target == Target::Matched {
        &METHODS
    } else {
        &["N-t", METHODS[0], METHODS[1], METHODS[2]]
    };
    labels.iter().copied().zip(rows).collect()
}

/// Coverage of the three matching methods at `ρ = 0.8`.
const PUBLISHED_AR1_COVERAGE: [f64; 3] = [94.2, 93.2, 94.4];

fn published_global(method: &str) -> Option<PublishedGlobal> {
    let row = |a, b, c, d| PublishedGlobal {
        mean_estimate: a,
        individual_rejection: b,
        min_p_rejection: c,
        global_rejection: d,
    };
    Some(match method {
        "N-t" => row(-0.95, 0.894, 1.0, 1.0),
        "1-1" => row(-0.01, 0.053, 1.0, 0.088),
        "1-1/2" => row(-0.01, 0.054, 1.0, 0.090),
        "1-2" => row(0.00, 0.056, 1.0, 0.110),
        _ => return None,
    })
}

/// One simulated summary row next to the published one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub section: String,
    pub summary: SummaryRow,
    pub published: Option<PublishedCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalComparison {
    pub section: String,
    pub summary: GlobalSummaryRow,
    pub published: Option<PublishedGlobal>,
}

/// A tolerance check: `lo ≤ value ≤ hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub published: Option<f64>,
    pub pass: bool,
}

impl Check {
    pub fn new(label: impl Into<String>, value: f64, lo: f64, hi: f64, published: Option<f64>) -> Self {
        Self {
            label: label.into(),
            value,
            lo,
            hi,
            published,
            pass: value >= lo && value <= hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reproduction {
    pub table: Table,
    pub reps: usize,
    pub seed: u64,
    pub rows: Vec<Comparison>,
    pub global_rows: Vec<GlobalComparison>,
    pub checks: Vec<Check>,
}

impl Reproduction {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// The simulated row of `method` in `section`.
    pub fn row(&self, section: &str, method: &str) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.section == section && r.summary.method == method)
            .map(|r| &r.summary)
    }

    pub fn global_row(&self, method: &str) -> Option<&GlobalSummaryRow> {
        self.global_rows
            .iter()
            .find(|r| r.summary.method == method)
            .map(|r| &r.summary)
    }
}

fn spec(scenario: Scenario, seed: u64) -> ScenarioSpec {
    let mut spec = ScenarioSpec::new(scenario, Sparsity::Medium);
    spec.seed = seed;
    spec
}

fn section(scenario: Scenario, target: Option<Target>) -> String {
    match target {
        None | Some(Target::AllTime) => format!("({scenario})"),
        Some(Target::Exposed) => format!("({scenario}) exposed"),
        Some(Target::Matched) => format!("({scenario}) matched"),
    }
}

fn attach(rows: Vec<SummaryRow>, section: &str, published: &[(&str, PublishedCell)]) -> Vec<Comparison> {
    rows.into_iter()
        .map(|summary| Comparison {
            section: section.to_string(),
            published: published.iter().find(|(m, _)| *m == summary.method).map(|(_, c)| *c),
            summary,
        })
        .collect()
}

fn matching_checks(checks: &mut Vec<Check>, rows: &[Comparison], sec: &str, cover_lo: f64, cover_hi: f64) {
    for r in rows.iter().filter(|r| r.section == sec && r.summary.prop.is_some()) {
        let m = &r.summary.method;
        checks.push(Check::new(
            format!("{sec} {m} |bias|"),
            r.summary.bias.abs(),
            0.0,
            0.08,
            r.published.map(|p| p.bias.abs()),
        ));
        checks.push(Check::new(
            format!("{sec} {m} coverage"),
            r.summary.coverage,
            cover_lo,
            cover_hi,
            r.published.map(|p| p.coverage),
        ));
    }
}

fn find<'a>(rows: &'a [Comparison], sec: &str, method: &str) -> Option<&'a Comparison> {
    rows.iter().find(|r| r.section == sec && r.summary.method == method)
}

fn push_check(checks: &mut Vec<Check>, rows: &[Comparison], sec: &str, method: &str, what: Stat, lo: f64, hi: f64) {
    let Some(r) = find(rows, sec, method) else {
        checks.push(Check::new(
            format!("{sec} {method} {what:?} missing"),
            f64::NAN,
            lo,
            hi,
            None,
        ));
        return;
    };
    let (value, published) = match what {
        Stat::Bias => (r.summary.bias, r.published.map(|p| p.bias)),
        Stat::Coverage => (r.summary.coverage, r.published.map(|p| p.coverage)),
        Stat::Prop => (r.summary.prop.unwrap_or(f64::NAN), r.published.and_then(|p| p.prop)),
    };
    let label = match what {
        Stat::Bias => "bias",
        Stat::Coverage => "coverage",
        Stat::Prop => "matched %",
    };
    checks.push(Check::new(format!("{sec} {method} {label}"), value, lo, hi, published));
}

#[derive(Debug, Clone, Copy)]
enum Stat {
    Bias,
    Coverage,
    Prop,
}

/// Runs the studies behind `table` at `reps` replications (medium sparsity,
/// default tuning) and checks the results against the reduced-scale
/// tolerances.
pub fn reproduce(table: Table, reps: usize, seed: u64) -> Result<Reproduction> {
    let mut rows = Vec::new();
    let mut global_rows = Vec::new();
    let mut checks = Vec::new();
    match table {
        Table::Single => {
            for scenario in Scenario::ALL {
                let study = run_study(&StudyConfig::new(spec(scenario, seed), reps))?;
                let sec = section(scenario, None);
                rows.extend(attach(study.summary, &sec, &published_single(scenario)));
                matching_checks(&mut checks, &rows, &sec, 88.0, 100.0);
            }
            push_check(&mut checks, &rows, "(b)", "N-t", Stat::Bias, -1.15, -0.75);
            push_check(&mut checks, &rows, "(b)", "N-t", Stat::Coverage, 0.0, 30.0);
            push_check(&mut checks, &rows, "(c)", "N-all", Stat::Bias, -4.3, -2.8);
            push_check(&mut checks, &rows, "(c)", "N-all", Stat::Coverage, 0.0, 0.0);
            push_check(&mut checks, &rows, "(a)", "1-1", Stat::Prop, 95.0, 100.0);
        }
        Table::Global => {
            let mut spec = spec(Scenario::B, seed);
            spec.variants.null_effects = true;
            let mut config = StudyConfig::new(spec, reps);
            config.naive = vec![NaiveKind::T];
            let study = run_global_study(&config)?;
            for summary in study.summary {
                let published = published_global(&summary.method);
                if summary.method == "N-t" {
                    checks.push(Check::new(
                        "(b) N-t global rejection",
                        summary.global_rejection,
                        1.0,
                        1.0,
                        published.map(|p| p.global_rejection),
                    ));
                } else {
                    checks.push(Check::new(
                        format!("(b) {} min p rejection", summary.method),
                        summary.min_p_rejection,
                        0.95,
                        1.0,
                        published.map(|p| p.min_p_rejection),
                    ));
                    checks.push(Check::new(
                        format!("(b) {} global rejection", summary.method),
                        summary.global_rejection,
                        0.02,
                        0.16,
                        published.map(|p| p.global_rejection),
                    ));
                }
                global_rows.push(GlobalComparison {
                    section: "(b) null".into(),
                    summary,
                    published,
                });
            }
        }
        Table::Unadjusted => {
            for scenario in Scenario::ALL {
                let mut config = StudyConfig::new(spec(scenario, seed), reps);
                config.params = TuningParams::default().unadjusted();
                config.naive.clear();
                let study = run_study(&config)?;
                let sec = section(scenario, None);
                rows.extend(attach(study.summary, &sec, &published_unadjusted(scenario)));
                match scenario {
                    Scenario::B | Scenario::C => matching_checks(&mut checks, &rows, &sec, 88.0, 100.0),
                    Scenario::D => {
                        for m in METHODS {
                            push_check(&mut checks, &rows, &sec, m, Stat::Bias, f64::NEG_INFINITY, -0.25);
                        }
                    }
                    _ => {}
                }
            }
        }
        Table::Heterogeneous => {
            for scenario in [Scenario::B, Scenario::D] {
                let mut spec = spec(scenario, seed);
                spec.variants.heterogeneous = true;
                let study = run_study(&StudyConfig::new(spec, reps))?;
                for target in [Target::AllTime, Target::Exposed, Target::Matched] {
                    let sec = section(scenario, Some(target));
                    let summary = summarize(&study.replications, target);
                    rows.extend(attach(summary, &sec, &published_heterogeneous(scenario, target)));
                }
                let matched = section(scenario, Some(Target::Matched));
                let all = section(scenario, Some(Target::AllTime));
                for m in METHODS {
                    push_check(&mut checks, &rows, &matched, m, Stat::Bias, -0.08, 0.08);
                    push_check(&mut checks, &rows, &matched, m, Stat::Coverage, 90.0, 100.0);
                    push_check(&mut checks, &rows, &all, m, Stat::Bias, 0.1, f64::INFINITY);
                }
            }
        }
        Table::Autocorrelated => {
            let mut spec = spec(Scenario::A, seed);
            spec.variants.ar1_rho = Some(0.8);
            let mut config = StudyConfig::new(spec, reps);
            config.naive = vec![NaiveKind::T];
            let study = run_study(&config)?;
            let sec = "(a) rho=0.8".to_string();
            let published: Vec<(&str, PublishedCell)> = METHODS
                .iter()
                .zip(PUBLISHED_AR1_COVERAGE)
                .map(|(&m, c)| {
                    (
                        m,
                        PublishedCell {
                            bias: 0.0,
                            mse: None,
                            coverage: c,
                            prop: None,
                        },
                    )
                })
                .collect();
            rows.extend(attach(study.summary, &sec, &published));
            for m in METHODS {
                push_check(&mut checks, &rows, &sec, m, Stat::Coverage, 88.0, 98.0);
            }
        }
    }
    Ok(Reproduction {
        table,
        reps,
        seed,
        rows,
        global_rows,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_ids_round_trip() {
        for t in Table::ALL {
            assert_eq!(t.id().parse::<Table>().unwrap(), t);
        }
        assert_eq!("S1".parse::<Table>().unwrap(), Table::Unadjusted);
    }

    #[test]
    fn unknown_table_is_an_error() {
        assert!(matches!("9".parse::<Table>(), Err(Error::UnknownTable(id)) if id == "9"));
    }

    #[test]
    fn checks_are_inclusive() {
        assert!(Check::new("x", 0.0, 0.0, 0.0, None).pass);
        assert!(!Check::new("x", 0.31, 0.0, 0.3, None).pass);
        assert!(!Check::new("x", f64::NAN, 0.0, 1.0, None).pass);
    }

    #[test]
    fn published_rows_cover_every_estimator() {
        for s in Scenario::ALL {
            assert_eq!(published_single(s).len(), 6);
            assert_eq!(published_unadjusted(s)[2].0, "1-2");
        }
        assert_eq!(published_heterogeneous(Scenario::B, Target::Matched).len(), 3);
        assert!(published_heterogeneous(Scenario::A, Target::Matched).is_empty());
    }

    #[test]
    fn small_autocorrelated_run_reports_all_methods() {
        let r = reproduce(Table::Autocorrelated, 2, 5).unwrap();
        assert_eq!(r.checks.len(), 3);
        for m in METHODS {
            assert!(r.row("(a) rho=0.8", m).is_some());
        }
        assert!(r.row("(a) rho=0.8", "N-t").is_some());
    }
}
