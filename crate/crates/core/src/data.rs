//! Panel container, validation, covariate summaries and standardization.
//!
//! Indices are zero-based internally; the time label of index `t` is `t + 1`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense covariate tensor whose last axis is the covariate index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CovariateTensor {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl CovariateTensor {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Self {
        Self { names, values }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }
}

/// Immutable panel of treatments, a time-varying bipartite network,
/// covariates and outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset {
    pub periods: usize,
    pub interventional: usize,
    pub outcome_units: usize,
    /// `[t][i]`
    pub treatments: Vec<f64>,
    /// `[t][i][j]`
    pub network: Vec<f64>,
    /// `[t][j]`
    pub outcomes: Vec<f64>,
    /// `[t][i][k]`
    pub x: CovariateTensor,
    /// `[t][j][k]`
    pub w: CovariateTensor,
    /// `[t][i][j][k]`
    pub p: CovariateTensor,
    /// Time-invariant blocks: `[i][k]`, `[j][k]`, `[i][j][k]`.
    pub x_static: CovariateTensor,
    pub w_static: CovariateTensor,
    pub p_static: CovariateTensor,
}

impl PanelDataset {
    /// A panel with no covariates.
    pub fn new(
        periods: usize,
        interventional: usize,
        outcome_units: usize,
        treatments: Vec<f64>,
        network: Vec<f64>,
        outcomes: Vec<f64>,
    ) -> Self {
        Self {
            periods,
            interventional,
            outcome_units,
            treatments,
            network,
            outcomes,
            x: CovariateTensor::empty(),
            w: CovariateTensor::empty(),
            p: CovariateTensor::empty(),
            x_static: CovariateTensor::empty(),
            w_static: CovariateTensor::empty(),
            p_static: CovariateTensor::empty(),
        }
    }

    #[inline]
    pub fn treatment(&self, t: usize, i: usize) -> f64 {
        self.treatments[t * self.interventional + i]
    }

    #[inline]
    pub fn edge(&self, t: usize, i: usize, j: usize) -> f64 {
        self.network[(t * self.interventional + i) * self.outcome_units + j]
    }

    #[inline]
    pub fn outcome(&self, t: usize, j: usize) -> f64 {
        self.outcomes[t * self.outcome_units + j]
    }

    #[inline]
    pub fn x_at(&self, t: usize, i: usize, k: usize) -> f64 {
        self.x.values[(t * self.interventional + i) * self.x.width() + k]
    }

    #[inline]
    pub fn w_at(&self, t: usize, j: usize, k: usize) -> f64 {
        self.w.values[(t * self.outcome_units + j) * self.w.width() + k]
    }

    #[inline]
    pub fn p_at(&self, t: usize, i: usize, j: usize, k: usize) -> f64 {
        let cell = (t * self.interventional + i) * self.outcome_units + j;
        self.p.values[cell * self.p.width() + k]
    }

    /// Outcome series of unit `j` (zero-based) over all periods.
    pub fn outcome_series(&self, j: usize) -> Vec<f64> {
        (0..self.periods).map(|t| self.outcome(t, j)).collect()
    }

    /// Checks a one-based outcome unit index and returns it zero-based.
    pub fn unit_index(&self, unit: usize) -> Result<usize> {
        if unit == 0 || unit > self.outcome_units {
            return Err(Error::InvalidUnit {
                unit,
                max: self.outcome_units,
            });
        }
        Ok(unit - 1)
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Issue {
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    NonBinaryTreatment {
        t: usize,
        i: usize,
        value: f64,
    },
    NonBinaryNetwork {
        t: usize,
        i: usize,
        j: usize,
        value: f64,
    },
    MissingNetworkSlice {
        t: usize,
    },
    MissingCell {
        what: String,
        t: usize,
        index: usize,
    },
    NonFinite {
        what: String,
        index: usize,
    },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::DimensionMismatch { what, expected, found } => write!(
                f,
                "dimension mismatch in {what}: expected {expected} cells, found {found}"
            ),
            Issue::NonBinaryTreatment { t, i, value } => {
                write!(f, "non-binary treatment at t={t}, i={i}: {value}")
            }
            Issue::NonBinaryNetwork { t, i, j, value } => {
                write!(f, "non-binary network entry at t={t}, i={i}, j={j}: {value}")
            }
            Issue::MissingNetworkSlice { t } => write!(f, "missing network slice at t={t}"),
            Issue::MissingCell { what, t, index } => {
                write!(f, "missing cell in {what} at t={t}, index {index}")
            }
            Issue::NonFinite { what, index } => {
                write!(f, "non-finite value in {what} at flat index {index}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::Validation(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return write!(f, "valid");
        }
        for issue in &self.issues {
            writeln!(f, "- {issue}")?;
        }
        Ok(())
    }
}

fn is_binary(v: f64) -> bool {
    v == 0.0 || v == 1.0
}

/// Reports dimension mismatches, non-binary `A`/`G` entries and missing cells
/// (encoded as NaN). Coordinates in the report are one-based.
pub fn validate(data: &PanelDataset) -> ValidationReport {
    let (t_len, n, m) = (data.periods, data.interventional, data.outcome_units);
    let mut issues = Vec::new();
    let mut check_len = |what: &str, expected: usize, found: usize| {
        if expected != found {
            issues.push(Issue::DimensionMismatch {
                what: what.to_string(),
                expected,
                found,
            });
            false
        } else {
            true
        }
    };

    let a_ok = check_len("treatments", t_len * n, data.treatments.len());
    let g_ok = check_len("network", t_len * n * m, data.network.len());
    let y_ok = check_len("outcomes", t_len * m, data.outcomes.len());
    let x_ok = check_len("x covariates", t_len * n * data.x.width(), data.x.values.len());
    let w_ok = check_len("w covariates", t_len * m * data.w.width(), data.w.values.len());
    let p_ok = check_len("p covariates", t_len * n * m * data.p.width(), data.p.values.len());
    check_len(
        "static x covariates",
        n * data.x_static.width(),
        data.x_static.values.len(),
    );
    check_len(
        "static w covariates",
        m * data.w_static.width(),
        data.w_static.values.len(),
    );
    check_len(
        "static p covariates",
        n * m * data.p_static.width(),
        data.p_static.values.len(),
    );

    if a_ok {
        for t in 0..t_len {
            for i in 0..n {
                let v = data.treatment(t, i);
                if v.is_nan() {
                    issues.push(Issue::MissingCell {
                        what: "treatments".into(),
                        t: t + 1,
                        index: i + 1,
                    });
                } else if !is_binary(v) {
                    issues.push(Issue::NonBinaryTreatment {
                        t: t + 1,
                        i: i + 1,
                        value: v,
                    });
                }
            }
        }
    }
    if g_ok && n * m > 0 {
        for t in 0..t_len {
            let slice = &data.network[t * n * m..(t + 1) * n * m];
            if slice.iter().all(|v| v.is_nan()) {
                issues.push(Issue::MissingNetworkSlice { t: t + 1 });
                continue;
            }
            for (cell, &v) in slice.iter().enumerate() {
                let (i, j) = (cell / m, cell % m);
                if v.is_nan() {
                    issues.push(Issue::MissingCell {
                        what: "network".into(),
                        t: t + 1,
                        index: cell + 1,
                    });
                } else if !is_binary(v) {
                    issues.push(Issue::NonBinaryNetwork {
                        t: t + 1,
                        i: i + 1,
                        j: j + 1,
                        value: v,
                    });
                }
            }
        }
    }
    let mut check_cells = |what: &str, ok: bool, values: &[f64], per_t: usize| {
        if !ok || per_t == 0 {
            return;
        }
        for (idx, v) in values.iter().enumerate() {
            if v.is_nan() {
                issues.push(Issue::MissingCell {
                    what: what.into(),
                    t: idx / per_t + 1,
                    index: idx % per_t + 1,
                });
            } else if !v.is_finite() {
                issues.push(Issue::NonFinite {
                    what: what.into(),
                    index: idx,
                });
            }
        }
    };
    check_cells("outcomes", y_ok, &data.outcomes, m);
    check_cells("x covariates", x_ok, &data.x.values, n * data.x.width());
    check_cells("w covariates", w_ok, &data.w.values, m * data.w.width());
    check_cells("p covariates", p_ok, &data.p.values, n * m * data.p.width());

    ValidationReport { issues }
}

/// Weights `q` that collapse interventional-unit covariates into one summary
/// per covariate: `summary = qᵀ X_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryWeights {
    /// Covariate the vector is meant for; `None` applies to every covariate.
    pub covariate: Option<String>,
    pub q: Vec<f64>,
}

impl SummaryWeights {
    pub fn new(covariate: Option<String>, q: Vec<f64>) -> Result<Self> {
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("summary weights must be finite".into()));
        }
        if q.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidParameter(
                "summary weights need at least one nonzero entry".into(),
            ));
        }
        Ok(Self { covariate, q })
    }

    /// `q_i = 1/N`.
    pub fn uniform(n: usize) -> Self {
        Self {
            covariate: None,
            q: vec![1.0 / n as f64; n],
        }
    }
}

/// Returns `qᵀ X_t` for a row-major `N × p` matrix.
pub fn summarize(x_t: &[f64], p: usize, q: &SummaryWeights) -> Result<Vec<f64>> {
    let n = q.q.len();
    if x_t.len() != n * p {
        return Err(Error::LengthMismatch {
            what: "covariate matrix vs summary weights".into(),
            expected: n * p,
            found: x_t.len(),
        });
    }
    let mut out = vec![0.0; p];
    for (row, &qi) in x_t.chunks_exact(p.max(1)).zip(&q.q) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += qi * v;
        }
    }
    Ok(out)
}

/// Where a balance column comes from. Drives constraint labelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateKind {
    /// Outcome-unit covariate `W`.
    Outcome,
    /// `q`-summary of interventional covariates.
    Interventional,
    /// `q`-summary of network covariates.
    Network,
    /// Localized or power expansion of another column.
    Auxiliary,
}

/// Unscaled balance columns, one series of length `T` per column.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawColumns {
    pub labels: Vec<String>,
    pub kinds: Vec<CovariateKind>,
    pub values: Vec<Vec<f64>>,
}

impl RawColumns {
    pub fn push(&mut self, label: impl Into<String>, kind: CovariateKind, values: Vec<f64>) {
        self.labels.push(label.into());
        self.kinds.push(kind);
        self.values.push(values);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// How balance columns are scaled before constraints are applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Scaling {
    /// Divided by the pooled exposed/unexposed standard deviation.
    Pooled { exposure: Vec<bool> },
    /// Raw units.
    Raw,
}

/// Balance covariates for one outcome unit with per-column scale factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceCovariateSet {
    pub labels: Vec<String>,
    pub kinds: Vec<CovariateKind>,
    pub raw: Vec<Vec<f64>>,
    pub scale: Vec<f64>,
    pub dropped: Vec<bool>,
    pub scaling: Scaling,
}

fn sample_variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    if n < 2 {
        return 0.0;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// `sqrt((Var_exposed + Var_unexposed) / 2)` with `n − 1` denominators.
pub fn pooled_sd(column: &[f64], exposure: &[bool]) -> f64 {
    let exposed = column.iter().zip(exposure).filter(|(_, &e)| e).map(|(&v, _)| v);
    let unexposed = column.iter().zip(exposure).filter(|(_, &e)| !e).map(|(&v, _)| v);
    ((sample_variance(exposed) + sample_variance(unexposed)) / 2.0).sqrt()
}

fn is_degenerate(sd: f64, column: &[f64]) -> bool {
    let magnitude = column.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    !(sd > 1e-12 * (1.0 + magnitude))
}

impl BalanceCovariateSet {
    /// Scales each column by its pooled standard deviation; constant columns
    /// are flagged `dropped`.
    pub fn standardize(columns: RawColumns, exposure: &[bool]) -> Result<Self> {
        let n_exposed = exposure.iter().filter(|&&e| e).count();
        if n_exposed == 0 || n_exposed == exposure.len() {
            return Err(Error::SingleClass(
                "standardization needs exposed and unexposed periods".into(),
            ));
        }
        let mut scale = Vec::with_capacity(columns.len());
        let mut dropped = Vec::with_capacity(columns.len());
        for col in &columns.values {
            if col.len() != exposure.len() {
                return Err(Error::LengthMismatch {
                    what: "balance column vs exposure series".into(),
                    expected: exposure.len(),
                    found: col.len(),
                });
            }
            let sd = pooled_sd(col, exposure);
            let degenerate = is_degenerate(sd, col);
            dropped.push(degenerate);
            scale.push(if degenerate { 1.0 } else { sd });
        }
        Ok(Self {
            labels: columns.labels,
            kinds: columns.kinds,
            raw: columns.values,
            scale,
            dropped,
            scaling: Scaling::Pooled {
                exposure: exposure.to_vec(),
            },
        })
    }

    /// Keeps raw units; only constant columns are dropped.
    pub fn unscaled(columns: RawColumns) -> Self {
        let dropped = columns
            .values
            .iter()
            .map(|col| {
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                col.is_empty() || hi - lo <= 0.0
            })
            .collect();
        Self {
            labels: columns.labels,
            kinds: columns.kinds,
            scale: vec![1.0; columns.values.len()],
            raw: columns.values,
            dropped,
            scaling: Scaling::Raw,
        }
    }

    /// A set with no columns (time-only matching).
    pub fn empty(periods: usize) -> Self {
        let _ = periods;
        Self::unscaled(RawColumns::default())
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Scaled value of column `col` at time index `t`.
    #[inline]
    pub fn value(&self, col: usize, t: usize) -> f64 {
        self.raw[col][t] / self.scale[col]
    }

    pub fn scaled_column(&self, col: usize) -> Vec<f64> {
        self.raw[col].iter().map(|v| v / self.scale[col]).collect()
    }

    /// Indices of columns that generate constraints.
    pub fn kept(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&c| !self.dropped[c])
    }

    pub fn dropped_labels(&self) -> Vec<String> {
        (0..self.len())
            .filter(|&c| self.dropped[c])
            .map(|c| self.labels[c].clone())
            .collect()
    }

    /// The scaled columns as a fresh [`RawColumns`].
    pub fn scaled_columns(&self) -> RawColumns {
        RawColumns {
            labels: self.labels.clone(),
            kinds: self.kinds.clone(),
            values: (0..self.len()).map(|c| self.scaled_column(c)).collect(),
        }
    }

    /// Appends columns and scales them with this set's scaling mode.
    pub fn append(&mut self, extra: RawColumns) -> Result<()> {
        let added = match &self.scaling {
            Scaling::Pooled { exposure } => Self::standardize(extra, &exposure.clone())?,
            Scaling::Raw => Self::unscaled(extra),
        };
        self.labels.extend(added.labels);
        self.kinds.extend(added.kinds);
        self.raw.extend(added.raw);
        self.scale.extend(added.scale);
        self.dropped.extend(added.dropped);
        Ok(())
    }
}

/// Which `q` vector summarizes each interventional or network covariate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    /// Fallback weights; `None` means `q_i = 1/N`.
    pub default: Option<SummaryWeights>,
    pub per_covariate: BTreeMap<String, SummaryWeights>,
}

impl WeightSpec {
    pub fn weights_for(&self, covariate: &str, n: usize) -> SummaryWeights {
        self.per_covariate
            .get(covariate)
            .or(self.default.as_ref())
            .cloned()
            .unwrap_or_else(|| SummaryWeights::uniform(n))
    }
}

/// Builds the balance columns of outcome unit `j` (zero-based): its own `W`
/// covariates plus `q`-summaries of every `X` and `P` covariate.
pub fn balance_columns(data: &PanelDataset, j: usize, weights: &WeightSpec) -> Result<RawColumns> {
    let (t_len, n) = (data.periods, data.interventional);
    let mut cols = RawColumns::default();
    for (k, name) in data.w.names.iter().enumerate() {
        let series = (0..t_len).map(|t| data.w_at(t, j, k)).collect();
        cols.push(format!("w:{name}"), CovariateKind::Outcome, series);
    }
    for (k, name) in data.x.names.iter().enumerate() {
        let q = weights.weights_for(name, n);
        check_weights(&q, n, name)?;
        let series = (0..t_len)
            .map(|t| (0..n).map(|i| q.q[i] * data.x_at(t, i, k)).sum())
            .collect();
        cols.push(format!("x:{name}"), CovariateKind::Interventional, series);
    }
    for (k, name) in data.p.names.iter().enumerate() {
        let q = weights.weights_for(name, n);
        check_weights(&q, n, name)?;
        let series = (0..t_len)
            .map(|t| (0..n).map(|i| q.q[i] * data.p_at(t, i, j, k)).sum())
            .collect();
        cols.push(format!("p:{name}"), CovariateKind::Network, series);
    }
    Ok(cols)
}

fn check_weights(q: &SummaryWeights, n: usize, name: &str) -> Result<()> {
    if q.q.len() != n {
        return Err(Error::LengthMismatch {
            what: format!("summary weights for {name}"),
            expected: n,
            found: q.q.len(),
        });
    }
    Ok(())
}
