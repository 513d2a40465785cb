//! Matching and naive estimators, and the analytic bias bounds.

use serde::{Deserialize, Serialize};

use crate::data::BalanceCovariateSet;
use crate::error::{Error, Result};
use crate::matcher::{MatchSet, Method};

/// What the matching estimator targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    /// Average effect over all exposed periods.
    ExposedPeriods,
    /// Average effect over the matched exposed periods only.
    MatchedPopulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub tau_hat: f64,
    pub method: Method,
    /// Matched exposed periods (one-based), increasing.
    pub matched_exposed: Vec<i64>,
    /// `Y_te − Y_imp(0)` per matched period, same order.
    pub differences: Vec<f64>,
    pub n_exposed: usize,
    pub prop_matched: f64,
    pub estimand: Estimand,
}

impl EffectEstimate {
    pub fn n_matched(&self) -> usize {
        self.differences.len()
    }
}

/// `τ̂ = mean(Y_te − Y_imp(0))` where the imputed outcome is `Y_tu` for
/// pairs and `(Y_tu1 + Y_tu2)/2` for triples. `outcomes[t − 1]` is `Y_t`.
pub fn impute_and_estimate(set: &MatchSet, outcomes: &[f64]) -> Result<EffectEstimate> {
    if set.is_empty() {
        return Err(Error::NoMatches);
    }
    let y = |t: i64| -> Result<f64> {
        usize::try_from(t - 1)
            .ok()
            .and_then(|i| outcomes.get(i).copied())
            .ok_or_else(|| Error::InvalidParameter(format!("no outcome for period {t}")))
    };
    let mut rows = Vec::with_capacity(set.len());
    for &(e, u) in &set.pairs {
        rows.push((e, y(e)? - y(u)?));
    }
    for &(e, a, b) in &set.triples {
        rows.push((e, y(e)? - (y(a)? + y(b)?) / 2.0));
    }
    rows.sort_by_key(|r| r.0);
    let differences: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let tau_hat = differences.iter().sum::<f64>() / differences.len() as f64;
    let n_exposed = set.n_exposed.max(rows.len());
    let prop_matched = rows.len() as f64 / n_exposed as f64;
    Ok(EffectEstimate {
        tau_hat,
        method: set.method,
        matched_exposed: rows.iter().map(|r| r.0).collect(),
        differences,
        n_exposed,
        prop_matched,
        estimand: if rows.len() < n_exposed {
            Estimand::MatchedPopulation
        } else {
            Estimand::ExposedPeriods
        },
    })
}

/// Difference of class means with the class summaries needed for a pooled
/// two-sample interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveEstimate {
    pub tau_hat: f64,
    pub n_exposed: usize,
    pub n_unexposed: usize,
    /// Sample standard deviations (`n − 1` denominators).
    pub sd_exposed: f64,
    pub sd_unexposed: f64,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn naive(exposure: &[bool], outcomes: &[f64], slice: &str) -> Result<NaiveEstimate> {
    if exposure.len() != outcomes.len() {
        return Err(Error::LengthMismatch {
            what: format!("{slice} exposure vs outcomes"),
            expected: exposure.len(),
            found: outcomes.len(),
        });
    }
    let (mut ye, mut yu) = (Vec::new(), Vec::new());
    for (&e, &y) in exposure.iter().zip(outcomes) {
        if e {
            ye.push(y);
        } else {
            yu.push(y);
        }
    }
    if ye.is_empty() || yu.is_empty() {
        return Err(Error::SingleClass(format!("{slice} has a single exposure class")));
    }
    let (me, se) = mean_sd(&ye);
    let (mu, su) = mean_sd(&yu);
    Ok(NaiveEstimate {
        tau_hat: me - mu,
        n_exposed: ye.len(),
        n_unexposed: yu.len(),
        sd_exposed: se,
        sd_unexposed: su,
    })
}

/// Exposed minus unexposed mean over the periods of one unit.
pub fn naive_t(exposure: &[bool], outcomes: &[f64]) -> Result<NaiveEstimate> {
    naive(exposure, outcomes, "time series")
}

/// Exposed minus unexposed mean over the units at one period.
pub fn naive_j(exposure: &[bool], outcomes: &[f64]) -> Result<NaiveEstimate> {
    naive(exposure, outcomes, "cross section")
}

/// Exposed minus unexposed mean over every unit-period cell.
pub fn naive_all(exposure: &[bool], outcomes: &[f64]) -> Result<NaiveEstimate> {
    naive(exposure, outcomes, "panel")
}

/// Coefficients of a linear outcome model in the raw balance units.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearBoundInputs {
    /// Time trend coefficient.
    pub beta_time: f64,
    /// `ℓ₁` norms of the coefficient blocks of `W`, summarized `X` and
    /// summarized `P`.
    pub norm_w: f64,
    pub norm_x: f64,
    pub norm_p: f64,
}

fn scaled(tol: f64, magnitude: f64) -> f64 {
    if magnitude == 0.0 {
        0.0
    } else {
        tol * magnitude
    }
}

/// `δ|β₂| + δ′(‖β₃‖₁ + ‖β₄‖₁ + ‖β₅‖₁)`
pub fn linear_bias_bound(inputs: &LinearBoundInputs, delta: f64, delta_prime: f64) -> f64 {
    scaled(delta, inputs.beta_time.abs())
        + scaled(
            delta_prime,
            inputs.norm_w.abs() + inputs.norm_x.abs() + inputs.norm_p.abs(),
        )
}

/// Inputs of the smooth-outcome bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothBoundInputs {
    /// Cap on the derivatives of every additive component.
    pub c: f64,
    /// Differentiability order `K`.
    pub k: u32,
    /// Interval length of the localized auxiliary columns.
    pub ell: f64,
    /// Number of periods `T`.
    pub horizon: usize,
    /// Support `[a_s, b_s]` of each balance covariate.
    pub supports: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothConstants {
    pub c_t: f64,
    pub c_wxp: f64,
    pub c_twxp: f64,
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

pub fn smooth_constants(inputs: &SmoothBoundInputs) -> SmoothConstants {
    let t_span = inputs.horizon.saturating_sub(1) as f64;
    let widths: f64 = inputs.supports.iter().map(|(a, b)| (b - a).abs()).sum();
    let inv: f64 = (1..inputs.k).map(|k| 1.0 / factorial(k)).sum();
    let last = 1.0 / factorial(inputs.k);
    SmoothConstants {
        c_t: t_span * inputs.c * inv / inputs.ell,
        c_wxp: widths * inputs.c * inv / inputs.ell,
        c_twxp: 0.5f64.powi(inputs.k as i32 - 1) * (t_span * inputs.c * last + widths * inputs.c * last),
    }
}

/// `C_T δ + C_WXP δ′ + C_TWXP ℓ^{K−1}`
pub fn smooth_bias_bound(inputs: &SmoothBoundInputs, delta: f64, delta_prime: f64) -> f64 {
    let k = smooth_constants(inputs);
    scaled(delta, k.c_t) + scaled(delta_prime, k.c_wxp) + k.c_twxp * inputs.ell.powi(inputs.k as i32 - 1)
}

/// Observed `[min, max]` of every raw column of the set.
pub fn observed_supports(set: &BalanceCovariateSet) -> Vec<(f64, f64)> {
    set.raw
        .iter()
        .map(|col| {
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        })
        .collect()
}
