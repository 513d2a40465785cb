//! Wald intervals, pooled two-sample intervals and the Benjamini–Hochberg
//! global test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{EffectEstimate, NaiveEstimate};
use crate::normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    TwoSided,
    Greater,
    Less,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub tau_hat: f64,
    /// Sample standard deviation of the differences (or pooled SD for the
    /// naive estimators).
    pub sd: f64,
    pub std_error: f64,
    pub n: usize,
    pub alpha: f64,
    /// Two-sided `1 − α` interval.
    pub ci: [f64; 2],
    /// `None` when the variance cannot be estimated.
    pub p_value: Option<f64>,
    pub alternative: Alternative,
    /// `no-variance` for a single matched period.
    pub flag: Option<String>,
}

impl InferenceResult {
    pub fn covers(&self, value: f64) -> bool {
        self.ci[0] <= value && value <= self.ci[1]
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

fn p_value(tau: f64, se: f64, alternative: Alternative) -> f64 {
    if se == 0.0 {
        let hit = match alternative {
            Alternative::TwoSided => tau != 0.0,
            Alternative::Greater => tau > 0.0,
            Alternative::Less => tau < 0.0,
        };
        return if hit { 0.0 } else { 1.0 };
    }
    let z = tau / se;
    match alternative {
        Alternative::TwoSided => (2.0 * normal::sf(z.abs())).min(1.0),
        Alternative::Greater => normal::sf(z),
        Alternative::Less => normal::cdf(z),
    }
}

fn interval(tau: f64, se: f64, alpha: f64) -> [f64; 2] {
    let half = normal::quantile(1.0 - alpha / 2.0) * se;
    [tau - half, tau + half]
}

/// Wald interval and p-value from per-match differences.
pub fn wald(estimate: &EffectEstimate, alpha: f64) -> Result<InferenceResult> {
    wald_differences(&estimate.differences, alpha, Alternative::TwoSided)
}

pub fn wald_differences(differences: &[f64], alpha: f64, alternative: Alternative) -> Result<InferenceResult> {
    check_alpha(alpha)?;
    let n = differences.len();
    if n == 0 {
        return Err(Error::NoMatches);
    }
    let tau_hat = differences.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(InferenceResult {
            tau_hat,
            sd: 0.0,
            std_error: 0.0,
            n,
            alpha,
            ci: [tau_hat, tau_hat],
            p_value: None,
            alternative,
            flag: Some("no-variance".into()),
        });
    }
    let var = differences.iter().map(|d| (d - tau_hat).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let se = sd / (n as f64).sqrt();
    Ok(InferenceResult {
        tau_hat,
        sd,
        std_error: se,
        n,
        alpha,
        ci: interval(tau_hat, se, alpha),
        p_value: Some(p_value(tau_hat, se, alternative)),
        alternative,
        flag: None,
    })
}

/// Pooled-variance two-sample interval for a naive estimator.
pub fn naive_wald(estimate: &NaiveEstimate, alpha: f64) -> Result<InferenceResult> {
    check_alpha(alpha)?;
    let (ne, nu) = (estimate.n_exposed, estimate.n_unexposed);
    if ne < 2 || nu < 2 {
        return Err(Error::InvalidParameter(format!(
            "pooled interval needs two observations per class, got {ne} and {nu}"
        )));
    }
    let (ne_f, nu_f) = (ne as f64, nu as f64);
    let pooled = ((ne_f - 1.0) * estimate.sd_exposed.powi(2) + (nu_f - 1.0) * estimate.sd_unexposed.powi(2))
        / (ne_f + nu_f - 2.0);
    let sd = pooled.sqrt();
    let se = sd * (1.0 / ne_f + 1.0 / nu_f).sqrt();
    let tau = estimate.tau_hat;
    Ok(InferenceResult {
        tau_hat: tau,
        sd,
        std_error: se,
        n: ne + nu,
        alpha,
        ci: interval(tau, se, alpha),
        p_value: Some(p_value(tau, se, Alternative::TwoSided)),
        alternative: Alternative::TwoSided,
        flag: None,
    })
}

/// Benjamini–Hochberg adjusted p-values in the input order.
pub fn bh_adjust(p: &[f64]) -> Result<Vec<f64>> {
    if p.is_empty() {
        return Err(Error::InvalidParameter("no p-values to adjust".into()));
    }
    if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidParameter(format!("p-value {bad} outside [0, 1]")));
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        running = running.min(p[i] * m as f64 / (rank + 1) as f64);
        adjusted[i] = running;
    }
    Ok(adjusted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitTest {
    /// One-based outcome unit.
    pub unit: usize,
    pub p_value: f64,
    pub adjusted: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalTestResult {
    pub alpha: f64,
    pub units: Vec<UnitTest>,
    /// Units without a p-value (no matches or a single match).
    pub unavailable: Vec<usize>,
    pub reject_global: bool,
    /// Units whose adjusted p-value is below `α`.
    pub affected: Vec<usize>,
    pub min_raw_p: f64,
}

/// Rejects the global null when any adjusted p-value is strictly below `α`.
pub fn global_test(p_values: &[(usize, Option<f64>)], alpha: f64) -> Result<GlobalTestResult> {
    check_alpha(alpha)?;
    let available: Vec<(usize, f64)> = p_values.iter().filter_map(|&(u, p)| p.map(|p| (u, p))).collect();
    let unavailable = p_values.iter().filter(|(_, p)| p.is_none()).map(|(u, _)| *u).collect();
    let raw: Vec<f64> = available.iter().map(|a| a.1).collect();
    let adjusted = bh_adjust(&raw)?;
    let units: Vec<UnitTest> = available
        .iter()
        .zip(&adjusted)
        .map(|(&(unit, p_value), &adjusted)| UnitTest {
            unit,
            p_value,
            adjusted,
            reject: adjusted < alpha,
        })
        .collect();
    let affected: Vec<usize> = units.iter().filter(|u| u.reject).map(|u| u.unit).collect();
    Ok(GlobalTestResult {
        alpha,
        reject_global: !affected.is_empty(),
        min_raw_p: raw.iter().cloned().fold(f64::INFINITY, f64::min),
        units,
        unavailable,
        affected,
    })
}
