use serde::{Deserialize, Serialize};

use super::{Assignment, BalanceReport, MatchSet, Method, Optimality, TuningParams};
use crate::data::{BalanceCovariateSet, CovariateKind, RawColumns};
use crate::error::{Error, Result};
use crate::exposure::ExposureSeries;

/// One admissible match: an exposed period with one or two unexposed periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Candidate {
    pub exposed: usize,
    /// Indices into `MatchingProblem::unexposed`; `unexposed[1]` is unused for pairs.
    pub unexposed: [usize; 2],
    pub arity: u8,
    /// `|t_e − mean(t_u)|`
    pub gap: f64,
}

impl Candidate {
    #[inline]
    pub fn units(&self) -> &[usize] {
        &self.unexposed[..self.arity as usize]
    }
}

/// Matching problem of one outcome unit with pre-filtered candidates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchingProblem {
    /// Exposed time labels (one-based), increasing.
    pub exposed: Vec<i64>,
    /// Unexposed time labels (one-based), increasing.
    pub unexposed: Vec<i64>,
    /// Balance covariates, auxiliary columns included.
    pub covariates: BalanceCovariateSet,
    pub params: TuningParams,
    pub method: Method,
    pub(crate) candidates: Vec<Candidate>,
    /// Candidate indices per exposed period, ordered by gap then time.
    pub(crate) by_exposed: Vec<Vec<usize>>,
    /// Labels of the aggregate constraint dimensions: time first.
    pub(crate) dim_labels: Vec<String>,
    pub(crate) dim_columns: Vec<usize>,
    pub(crate) tol: Vec<f64>,
    pub(crate) weight: Vec<f64>,
    /// Row-major `candidates × dims` contributions `x_te − mean(x_u)`.
    pub(crate) contrib: Vec<f64>,
}

/// Builds the problem from an exposure series. Auxiliary columns are appended
/// when `ell` and `kpow` are set.
pub fn build_problem(
    exposure: &ExposureSeries,
    covariates: BalanceCovariateSet,
    params: TuningParams,
    method: Method,
) -> Result<MatchingProblem> {
    MatchingProblem::new(
        exposure.exposed_times(),
        exposure.unexposed_times(),
        covariates,
        params,
        method,
    )
}

impl MatchingProblem {
    /// Builds a problem from explicit time sets. Covariate columns are indexed
    /// by `t − 1`.
    pub fn new(
        mut exposed: Vec<i64>,
        mut unexposed: Vec<i64>,
        covariates: BalanceCovariateSet,
        params: TuningParams,
        method: Method,
    ) -> Result<Self> {
        params.validate()?;
        exposed.sort_unstable();
        exposed.dedup();
        unexposed.sort_unstable();
        unexposed.dedup();
        if exposed.is_empty() || unexposed.is_empty() {
            return Err(Error::NoMatchesPossible);
        }
        if exposed.iter().any(|t| unexposed.binary_search(t).is_ok()) {
            return Err(Error::InvalidParameter("exposed and unexposed periods overlap".into()));
        }
        if exposed[0] < 1 || unexposed[0] < 1 {
            return Err(Error::InvalidParameter("time labels start at 1".into()));
        }
        let horizon = (*exposed.last().unwrap()).max(*unexposed.last().unwrap()) as usize;
        for (c, col) in covariates.raw.iter().enumerate() {
            if col.len() < horizon {
                return Err(Error::LengthMismatch {
                    what: format!("balance column {}", covariates.labels[c]),
                    expected: horizon,
                    found: col.len(),
                });
            }
        }
        let covariates = match (params.ell, params.kpow) {
            (Some(ell), Some(k)) => expand_auxiliary(covariates, ell, k)?,
            _ => covariates,
        };

        let mut dim_labels = vec!["time".to_string()];
        let mut dim_columns = vec![usize::MAX];
        let mut tol = vec![params.delta];
        let mut weight = vec![1.0 / f64::from(params.eps.max(1))];
        if params.balances_covariates() {
            for c in covariates.kept() {
                dim_labels.push(covariates.labels[c].clone());
                dim_columns.push(c);
                tol.push(params.delta_prime);
                weight.push(1.0);
            }
        }

        let mut problem = Self {
            exposed,
            unexposed,
            covariates,
            params,
            method,
            candidates: Vec::new(),
            by_exposed: Vec::new(),
            dim_labels,
            dim_columns,
            tol,
            weight,
            contrib: Vec::new(),
        };
        problem.generate_candidates();
        Ok(problem)
    }

    fn generate_candidates(&mut self) {
        let eps = i64::from(self.params.eps);
        let kept: Vec<usize> = self.covariates.kept().collect();
        let mut candidates = Vec::new();
        for (e, &te) in self.exposed.iter().enumerate() {
            let lo = self.unexposed.partition_point(|&u| u < te - eps);
            let hi = self.unexposed.partition_point(|&u| u <= te + eps);
            let window = lo..hi;
            if self.method.allows_pairs() {
                for u in window.clone() {
                    candidates.push(Candidate {
                        exposed: e,
                        unexposed: [u, usize::MAX],
                        arity: 1,
                        gap: (te - self.unexposed[u]).abs() as f64,
                    });
                }
            }
            if self.method.allows_triples() {
                let split = self.unexposed.partition_point(|&u| u < te);
                for a in lo..split {
                    for b in split..hi {
                        let mid = (self.unexposed[a] + self.unexposed[b]) as f64 / 2.0;
                        candidates.push(Candidate {
                            exposed: e,
                            unexposed: [a, b],
                            arity: 2,
                            gap: (te as f64 - mid).abs(),
                        });
                    }
                }
            }
        }
        if let Some(cap) = self.params.delta_dprime {
            candidates.retain(|c| {
                kept.iter()
                    .all(|&col| self.covariate_diff(c, col).abs() <= cap + super::SOLVER_SLACK)
            });
        }
        let dims = self.tol.len();
        let mut contrib = Vec::with_capacity(candidates.len() * dims);
        for c in &candidates {
            contrib.push(self.time_diff(c));
            for &col in &self.dim_columns[1..] {
                contrib.push(self.covariate_diff(c, col));
            }
        }
        let mut by_exposed = vec![Vec::new(); self.exposed.len()];
        for (idx, c) in candidates.iter().enumerate() {
            by_exposed[c.exposed].push(idx);
        }
        for list in &mut by_exposed {
            list.sort_by(|&a, &b| {
                candidates[a]
                    .gap
                    .total_cmp(&candidates[b].gap)
                    .then_with(|| self.key_of(&candidates[a]).cmp(&self.key_of(&candidates[b])))
            });
        }
        self.candidates = candidates;
        self.contrib = contrib;
        self.by_exposed = by_exposed;
    }

    fn time_diff(&self, c: &Candidate) -> f64 {
        let te = self.exposed[c.exposed] as f64;
        let mean: f64 = c.units().iter().map(|&u| self.unexposed[u] as f64).sum::<f64>() / f64::from(c.arity);
        te - mean
    }

    fn covariate_diff(&self, c: &Candidate, col: usize) -> f64 {
        let cov = &self.covariates;
        let te = (self.exposed[c.exposed] - 1) as usize;
        let mean: f64 = c
            .units()
            .iter()
            .map(|&u| cov.value(col, (self.unexposed[u] - 1) as usize))
            .sum::<f64>()
            / f64::from(c.arity);
        cov.value(col, te) - mean
    }

    fn key_of(&self, c: &Candidate) -> (i64, i64, i64) {
        let te = self.exposed[c.exposed];
        let u1 = self.unexposed[c.unexposed[0]];
        let u2 = if c.arity == 2 {
            self.unexposed[c.unexposed[1]]
        } else {
            i64::MIN
        };
        (te, u1, u2)
    }

    pub(crate) fn match_key(&self, cand: usize) -> (i64, i64, i64) {
        self.key_of(&self.candidates[cand])
    }

    #[inline]
    pub(crate) fn dims(&self) -> usize {
        self.tol.len()
    }

    #[inline]
    pub(crate) fn contrib_of(&self, cand: usize) -> &[f64] {
        let d = self.dims();
        &self.contrib[cand * d..(cand + 1) * d]
    }

    pub fn candidate_count(&self) -> usize {
        self.candidates.len()
    }

    /// Admissible `(t_e, t_u)` pairs after the `ε` and `δ″` filters.
    pub fn candidate_pairs(&self) -> Vec<(i64, i64)> {
        self.candidates
            .iter()
            .filter(|c| c.arity == 1)
            .map(|c| (self.exposed[c.exposed], self.unexposed[c.unexposed[0]]))
            .collect()
    }

    /// Admissible `(t_e, t_u1, t_u2)` triples.
    pub fn candidate_triples(&self) -> Vec<(i64, i64, i64)> {
        self.candidates
            .iter()
            .filter(|c| c.arity == 2)
            .map(|c| {
                (
                    self.exposed[c.exposed],
                    self.unexposed[c.unexposed[0]],
                    self.unexposed[c.unexposed[1]],
                )
            })
            .collect()
    }

    /// Labels of the aggregate constraint rows (`time` first).
    pub fn constraint_labels(&self) -> &[String] {
        &self.dim_labels
    }

    pub(crate) fn to_match_set(&self, assignment: &Assignment, upper_bound: usize) -> MatchSet {
        let mut pairs = Vec::new();
        let mut triples = Vec::new();
        for &c in assignment.choice.iter().flatten() {
            let (te, u1, u2) = self.match_key(c);
            if self.candidates[c].arity == 1 {
                pairs.push((te, u1));
            } else {
                triples.push((te, u1, u2));
            }
        }
        pairs.sort_unstable();
        triples.sort_unstable();
        MatchSet {
            method: self.method,
            pairs,
            triples,
            optimality: Optimality::Heuristic,
            upper_bound,
            n_exposed: self.exposed.len(),
            balance: BalanceReport::default(),
        }
    }
}

/// Localized and power columns for every non-auxiliary column.
///
/// For a column with observed support `[a, b]` this yields `⌈(b − a)/ℓ⌉`
/// columns `(w − ξ_r)·I(|w − ξ_r| ≤ ℓ/2)` at interval midpoints `ξ_r`, and the
/// powers `w^k` for `k = 2..K−1`. Columns with degenerate support are
/// skipped and returned by label.
pub fn auxiliary_columns(covariates: &BalanceCovariateSet, ell: f64, kpow: u32) -> Result<(RawColumns, Vec<String>)> {
    if !(ell > 0.0) || !ell.is_finite() {
        return Err(Error::InvalidParameter("ell must be positive".into()));
    }
    if kpow < 2 {
        return Err(Error::InvalidParameter("K must be at least 2".into()));
    }
    let mut out = RawColumns::default();
    let mut skipped = Vec::new();
    for c in 0..covariates.len() {
        if covariates.kinds[c] == CovariateKind::Auxiliary {
            continue;
        }
        let col = &covariates.raw[c];
        let a = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let b = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(b > a) {
            skipped.push(covariates.labels[c].clone());
            continue;
        }
        let intervals = (((b - a) / ell) - 1e-9).ceil().max(1.0) as usize;
        for r in 0..intervals {
            let xi = a + (r as f64 + 0.5) * ell;
            let values = col
                .iter()
                .map(|&w| if (w - xi).abs() <= ell / 2.0 { w - xi } else { 0.0 })
                .collect();
            out.push(
                format!("{}@{xi:.6}", covariates.labels[c]),
                CovariateKind::Auxiliary,
                values,
            );
        }
        for k in 2..kpow {
            let values = col.iter().map(|&w| w.powi(k as i32)).collect();
            out.push(
                format!("{}^{k}", covariates.labels[c]),
                CovariateKind::Auxiliary,
                values,
            );
        }
    }
    Ok((out, skipped))
}

/// Appends [`auxiliary_columns`] to the set, scaled like the original columns.
pub fn expand_auxiliary(mut covariates: BalanceCovariateSet, ell: f64, kpow: u32) -> Result<BalanceCovariateSet> {
    let (extra, _skipped) = auxiliary_columns(&covariates, ell, kpow)?;
    covariates.append(extra)?;
    Ok(covariates)
}
