use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{generate, SimData};
use super::ScenarioSpec;
use crate::data::BalanceCovariateSet;
use crate::error::{Error, Result};
use crate::estimator::{impute_and_estimate, naive_all, naive_j, naive_t};
use crate::inference::{global_test, naive_wald, wald, InferenceResult};
use crate::matcher::{solve_with, MatchSet, MatchingProblem, Method, Optimality, SolverOptions, TuningParams};

/// Naive difference-in-means comparators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NaiveKind {
    /// The studied unit across time.
    T,
    /// All outcome units at the first period.
    J,
    /// Every unit and period.
    All,
}

impl NaiveKind {
    pub const ALL: [NaiveKind; 3] = [NaiveKind::T, NaiveKind::J, NaiveKind::All];

    pub fn label(self) -> &'static str {
        match self {
            NaiveKind::T => "N-t",
            NaiveKind::J => "N-j",
            NaiveKind::All => "N-all",
        }
    }
}

impl fmt::Display for NaiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub spec: ScenarioSpec,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub params: TuningParams,
    pub naive: Vec<NaiveKind>,
    pub alpha: f64,
    pub solver: SolverOptions,
}

impl StudyConfig {
    /// All matching methods at the default tuning and every naive
    /// comparator that targets the same estimand.
    pub fn new(spec: ScenarioSpec, reps: usize) -> Self {
        let naive = if spec.variants.heterogeneous {
            vec![NaiveKind::T]
        } else {
            NaiveKind::ALL.to_vec()
        };
        Self {
            spec,
            reps,
            methods: Method::ALL.to_vec(),
            params: TuningParams::default(),
            naive,
            alpha: 0.05,
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.params.validate()?;
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// One estimator in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub method: String,
    /// `None` when the estimator could not be computed.
    pub tau_hat: Option<f64>,
    pub ci: Option<[f64; 2]>,
    pub p_value: Option<f64>,
    pub n_matched: usize,
    /// Share of exposed periods matched; `None` for naive rows.
    pub prop_matched: Option<f64>,
    pub proven: Option<bool>,
    /// Mean individual effect over the matched exposed periods.
    pub truth_matched: Option<f64>,
}

impl MethodRecord {
    fn failed(method: String, matching: bool) -> Self {
        Self {
            method,
            tau_hat: None,
            ci: None,
            p_value: None,
            n_matched: 0,
            prop_matched: matching.then_some(0.0),
            proven: None,
            truth_matched: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub rep: usize,
    pub seed: u64,
    pub n_exposed: usize,
    /// Mean individual effect of the studied unit over all periods.
    pub truth_all: f64,
    /// The same over its exposed periods.
    pub truth_exposed: Option<f64>,
    pub records: Vec<MethodRecord>,
}

/// Which effect a summary compares estimates against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Average over all periods.
    AllTime,
    /// Average over exposed periods.
    Exposed,
    /// Average over the matched exposed periods of each method.
    Matched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub target: Target,
    /// Replications with an estimate.
    pub reps: usize,
    pub failures: usize,
    pub mean_estimate: f64,
    pub bias: f64,
    pub mse: f64,
    /// Percent of intervals covering the target.
    pub coverage: f64,
    /// Mean percent of exposed periods matched.
    pub prop: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub config: StudyConfig,
    pub replications: Vec<ReplicationResult>,
    pub summary: Vec<SummaryRow>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Standardized balance set of outcome unit `j`; `None` with a single class.
fn unit_covariates(data: &SimData, j: usize, exposure: &[bool]) -> Option<BalanceCovariateSet> {
    BalanceCovariateSet::standardize(data.balance_columns(j), exposure).ok()
}

fn times(exposure: &[bool], class: bool) -> Vec<i64> {
    (1..=exposure.len() as i64)
        .filter(|&t| exposure[t as usize - 1] == class)
        .collect()
}

struct UnitFit {
    set: MatchSet,
    inference: Option<InferenceResult>,
}

fn fit_unit(
    exposure: &[bool],
    outcomes: &[f64],
    covariates: &BalanceCovariateSet,
    method: Method,
    config: &StudyConfig,
) -> Option<UnitFit> {
    let problem = MatchingProblem::new(
        times(exposure, true),
        times(exposure, false),
        covariates.clone(),
        config.params.clone(),
        method,
    )
    .ok()?;
    let set = solve_with(&problem, &config.solver);
    let inference = impute_and_estimate(&set, outcomes)
        .ok()
        .and_then(|est| wald(&est, config.alpha).ok());
    Some(UnitFit { set, inference })
}

/// Generates and analyses replication `rep`.
pub fn run_replication(config: &StudyConfig, rep: usize) -> ReplicationResult {
    let spec = &config.spec;
    let seed = spec.replication_seed(rep);
    let data = generate(spec, seed, false);
    let j = spec.target_unit - 1;
    let exposure = data.exposure_series(j);
    let outcomes = data.outcome_series(j);
    let effects = data.effect_series(j);
    let n_exposed = exposure.iter().filter(|&&e| e).count();
    let truth_all = mean(&effects).unwrap_or(0.0);
    let exposed_effects: Vec<f64> = effects
        .iter()
        .zip(&exposure)
        .filter(|(_, &e)| e)
        .map(|(&v, _)| v)
        .collect();
    let truth_exposed = mean(&exposed_effects);
    let covariates = unit_covariates(&data, j, &exposure);

    let mut records = Vec::new();
    for &method in &config.methods {
        let label = method.to_string();
        let fit = covariates
            .as_ref()
            .and_then(|cov| fit_unit(&exposure, &outcomes, cov, method, config));
        let record = match fit {
            None => MethodRecord::failed(label, n_exposed > 0),
            Some(UnitFit { set, inference }) => {
                let matched: Vec<f64> = set.matched_exposed().iter().map(|&t| effects[t as usize - 1]).collect();
                MethodRecord {
                    method: label,
                    tau_hat: inference.as_ref().map(|r| r.tau_hat),
                    ci: inference.as_ref().map(|r| r.ci),
                    p_value: inference.as_ref().and_then(|r| r.p_value),
                    n_matched: set.len(),
                    prop_matched: Some(set.matched_proportion()),
                    proven: Some(set.optimality == Optimality::Proven),
                    truth_matched: mean(&matched),
                }
            }
        };
        records.push(record);
    }

    for &kind in &config.naive {
        let estimate = match kind {
            NaiveKind::T => naive_t(&exposure, &outcomes),
            NaiveKind::J => {
                let m = spec.m;
                naive_j(&data.exposure[..m], &data.outcomes[..m])
            }
            NaiveKind::All => naive_all(&data.exposure, &data.outcomes),
        };
        let inference = estimate.ok().and_then(|e| naive_wald(&e, config.alpha).ok());
        records.push(match inference {
            None => MethodRecord::failed(kind.label().into(), false),
            Some(r) => MethodRecord {
                method: kind.label().into(),
                tau_hat: Some(r.tau_hat),
                ci: Some(r.ci),
                p_value: r.p_value,
                n_matched: 0,
                prop_matched: None,
                proven: None,
                truth_matched: None,
            },
        });
    }

    ReplicationResult {
        rep,
        seed,
        n_exposed,
        truth_all,
        truth_exposed,
        records,
    }
}

/// Monte-Carlo study: replications run in parallel, each from its own seed.
pub fn run_study(config: &StudyConfig) -> Result<Study> {
    config.validate()?;
    let replications: Vec<ReplicationResult> = (0..config.reps)
        .into_par_iter()
        .map(|rep| run_replication(config, rep))
        .collect();
    let summary = summarize(&replications, Target::AllTime);
    Ok(Study {
        config: config.clone(),
        replications,
        summary,
    })
}

/// Bias, MSE, coverage and matched proportion per method against `target`.
/// Rows without any usable truth (naive rows under [`Target::Matched`]) are
/// omitted.
pub fn summarize(replications: &[ReplicationResult], target: Target) -> Vec<SummaryRow> {
    let Some(first) = replications.first() else {
        return Vec::new();
    };
    let mut rows = Vec::new();
    for (k, record) in first.records.iter().enumerate() {
        let (mut est, mut err, mut cover, mut props) = (Vec::new(), Vec::new(), 0usize, Vec::new());
        let mut failures = 0;
        for r in replications {
            let rec = &r.records[k];
            if let Some(p) = rec.prop_matched {
                if r.n_exposed > 0 {
                    props.push(100.0 * p);
                }
            }
            let truth = match target {
                Target::AllTime => Some(r.truth_all),
                Target::Exposed => r.truth_exposed,
                Target::Matched => rec.truth_matched,
            };
            match (rec.tau_hat, truth) {
                (Some(tau), Some(truth)) => {
                    est.push(tau);
                    err.push(tau - truth);
                    if rec.ci.is_some_and(|ci| ci[0] <= truth && truth <= ci[1]) {
                        cover += 1;
                    }
                }
                _ => failures += 1,
            }
        }
        if est.is_empty() && target == Target::Matched && record.prop_matched.is_none() {
            continue;
        }
        let n = est.len();
        rows.push(SummaryRow {
            method: record.method.clone(),
            target,
            reps: n,
            failures,
            mean_estimate: mean(&est).unwrap_or(f64::NAN),
            bias: mean(&err).unwrap_or(f64::NAN),
            mse: mean(&err.iter().map(|e| e * e).collect::<Vec<_>>()).unwrap_or(f64::NAN),
            coverage: if n > 0 {
                100.0 * cover as f64 / n as f64
            } else {
                f64::NAN
            },
            prop: mean(&props),
        });
    }
    rows
}

/// Per-unit results of one estimator in one replication of a multi-unit
/// study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalMethodRep {
    pub method: String,
    pub estimates: Vec<Option<f64>>,
    pub p_values: Vec<Option<f64>>,
    pub min_raw_p: Option<f64>,
    pub reject_global: bool,
    /// Share of units with a p-value whose raw p-value is below `α`.
    pub individual_rejection: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalRepResult {
    pub rep: usize,
    pub seed: u64,
    pub methods: Vec<GlobalMethodRep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSummaryRow {
    pub method: String,
    pub reps: usize,
    /// Mean over replications of the mean unit-level estimate.
    pub mean_estimate: f64,
    /// Mean share of units individually rejected.
    pub individual_rejection: f64,
    /// Share of replications whose smallest raw p-value is below `α`.
    pub min_p_rejection: f64,
    /// Share of replications rejecting the global null after FDR correction.
    pub global_rejection: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalStudy {
    pub config: StudyConfig,
    pub replications: Vec<GlobalRepResult>,
    pub summary: Vec<GlobalSummaryRow>,
}

fn global_row(method: String, estimates: Vec<Option<f64>>, p_values: Vec<Option<f64>>, alpha: f64) -> GlobalMethodRep {
    let tagged: Vec<(usize, Option<f64>)> = p_values.iter().enumerate().map(|(j, &p)| (j + 1, p)).collect();
    let available: Vec<f64> = p_values.iter().flatten().copied().collect();
    let test = global_test(&tagged, alpha).ok();
    GlobalMethodRep {
        method,
        estimates,
        min_raw_p: available.iter().copied().reduce(f64::min),
        reject_global: test.is_some_and(|t| t.reject_global),
        individual_rejection: (!available.is_empty())
            .then(|| available.iter().filter(|&&p| p < alpha).count() as f64 / available.len() as f64),
        p_values,
    }
}

fn run_global_replication(config: &StudyConfig, rep: usize) -> GlobalRepResult {
    let spec = &config.spec;
    let seed = spec.replication_seed(rep);
    let data = generate(spec, seed, false);
    let units: Vec<(Vec<bool>, Vec<f64>, Option<BalanceCovariateSet>)> = (0..spec.m)
        .map(|j| {
            let exposure = data.exposure_series(j);
            let cov = unit_covariates(&data, j, &exposure);
            (exposure, data.outcome_series(j), cov)
        })
        .collect();
    let mut methods = Vec::new();
    for &method in &config.methods {
        let (mut estimates, mut p_values) = (Vec::new(), Vec::new());
        for (exposure, outcomes, cov) in &units {
            let inference = cov
                .as_ref()
                .and_then(|c| fit_unit(exposure, outcomes, c, method, config))
                .and_then(|f| f.inference);
            estimates.push(inference.as_ref().map(|r| r.tau_hat));
            p_values.push(inference.and_then(|r| r.p_value));
        }
        methods.push(global_row(method.to_string(), estimates, p_values, config.alpha));
    }
    if config.naive.contains(&NaiveKind::T) {
        let (mut estimates, mut p_values) = (Vec::new(), Vec::new());
        for (exposure, outcomes, _) in &units {
            let r = naive_t(exposure, outcomes)
                .ok()
                .and_then(|e| naive_wald(&e, config.alpha).ok());
            estimates.push(r.as_ref().map(|r| r.tau_hat));
            p_values.push(r.and_then(|r| r.p_value));
        }
        methods.push(global_row(
            NaiveKind::T.label().into(),
            estimates,
            p_values,
            config.alpha,
        ));
    }
    GlobalRepResult { rep, seed, methods }
}

/// Multi-unit study: every outcome unit is analysed and the FDR-corrected
/// global test is applied per replication. Only the naive-t comparator is
/// used since the others do not target unit-level effects.
pub fn run_global_study(config: &StudyConfig) -> Result<GlobalStudy> {
    config.validate()?;
    let replications: Vec<GlobalRepResult> = (0..config.reps)
        .into_par_iter()
        .map(|rep| run_global_replication(config, rep))
        .collect();
    let summary = summarize_global(&replications, config.alpha);
    Ok(GlobalStudy {
        config: config.clone(),
        replications,
        summary,
    })
}

pub fn summarize_global(replications: &[GlobalRepResult], alpha: f64) -> Vec<GlobalSummaryRow> {
    let Some(first) = replications.first() else {
        return Vec::new();
    };
    (0..first.methods.len())
        .map(|k| {
            let rows: Vec<&GlobalMethodRep> = replications.iter().map(|r| &r.methods[k]).collect();
            let n = rows.len() as f64;
            let unit_means: Vec<f64> = rows
                .iter()
                .filter_map(|r| mean(&r.estimates.iter().flatten().copied().collect::<Vec<_>>()))
                .collect();
            let individual: Vec<f64> = rows.iter().filter_map(|r| r.individual_rejection).collect();
            GlobalSummaryRow {
                method: first.methods[k].method.clone(),
                reps: rows.len(),
                mean_estimate: mean(&unit_means).unwrap_or(f64::NAN),
                individual_rejection: mean(&individual).unwrap_or(f64::NAN),
                min_p_rejection: rows.iter().filter(|r| r.min_raw_p.is_some_and(|p| p < alpha)).count() as f64 / n,
                global_rejection: rows.iter().filter(|r| r.reject_global).count() as f64 / n,
            }
        })
        .collect()
}
