//! Exposure mappings `E_tj = h(A_t, G_t·j)` for one outcome unit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::PanelDataset;
use crate::error::{Error, Result};

/// The rule that produced an exposure series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ExposureRule {
    /// Exposed when at least `d` connected interventional units are treated.
    Threshold { d: u32 },
    /// Exposed when the treated share of connected units reaches `threshold`.
    Proportion { threshold: f64 },
    /// Read directly from an exposure file.
    Supplied,
    /// A user-provided mapping.
    Custom { name: String },
}

impl fmt::Display for ExposureRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExposureRule::Threshold { d } => write!(f, "threshold:d={d}"),
            ExposureRule::Proportion { threshold } => write!(f, "proportion:th={threshold}"),
            ExposureRule::Supplied => write!(f, "supplied"),
            ExposureRule::Custom { name } => write!(f, "custom:{name}"),
        }
    }
}

impl FromStr for ExposureRule {
    type Err = Error;

    /// Parses `threshold:d=K` or `proportion:th=X`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unrecognised exposure rule {s:?}"));
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        let (key, value) = arg.split_once('=').ok_or_else(bad)?;
        match (kind, key) {
            ("threshold", "d") => {
                let d: u32 = value.parse().map_err(|_| bad())?;
                if d == 0 {
                    return Err(Error::InvalidParameter("threshold d must be ≥ 1".into()));
                }
                Ok(ExposureRule::Threshold { d })
            }
            ("proportion", "th") => {
                let threshold: f64 = value.parse().map_err(|_| bad())?;
                if !(threshold > 0.0 && threshold <= 1.0) {
                    return Err(Error::InvalidParameter(
                        "proportion threshold must lie in (0, 1]".into(),
                    ));
                }
                Ok(ExposureRule::Proportion { threshold })
            }
            _ => Err(bad()),
        }
    }
}

/// Binary exposure of one outcome unit over all periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureSeries {
    /// One-based outcome unit index.
    pub unit: usize,
    pub values: Vec<bool>,
    pub rule: ExposureRule,
}

impl ExposureSeries {
    pub fn n_exposed(&self) -> usize {
        self.values.iter().filter(|&&e| e).count()
    }

    /// One-based time labels of exposed periods.
    pub fn exposed_times(&self) -> Vec<i64> {
        self.times_where(true)
    }

    pub fn unexposed_times(&self) -> Vec<i64> {
        self.times_where(false)
    }

    fn times_where(&self, flag: bool) -> Vec<i64> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &e)| e == flag)
            .map(|(t, _)| t as i64 + 1)
            .collect()
    }
}

fn treated_neighbors(data: &PanelDataset, t: usize, j: usize) -> (u32, u32) {
    let mut treated = 0;
    let mut connected = 0;
    for i in 0..data.interventional {
        if data.edge(t, i, j) == 1.0 {
            connected += 1;
            if data.treatment(t, i) == 1.0 {
                treated += 1;
            }
        }
    }
    (treated, connected)
}

/// `E_tj = I(Σ_i A_ti G_tij ≥ d)`; `unit` is one-based.
pub fn threshold_exposure(data: &PanelDataset, unit: usize, d: u32) -> Result<ExposureSeries> {
    let j = data.unit_index(unit)?;
    if d == 0 {
        return Err(Error::InvalidParameter("threshold d must be ≥ 1".into()));
    }
    let values = (0..data.periods)
        .map(|t| treated_neighbors(data, t, j).0 >= d)
        .collect();
    Ok(ExposureSeries {
        unit,
        values,
        rule: ExposureRule::Threshold { d },
    })
}

/// Dichotomized treated share of connected units. Periods without any
/// connection map to `E = 0`.
pub fn proportion_exposure(data: &PanelDataset, unit: usize, threshold: f64) -> Result<ExposureSeries> {
    let j = data.unit_index(unit)?;
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidParameter(
            "proportion threshold must lie in (0, 1]".into(),
        ));
    }
    let values = (0..data.periods)
        .map(|t| {
            let (treated, connected) = treated_neighbors(data, t, j);
            connected > 0 && treated as f64 / connected as f64 >= threshold
        })
        .collect();
    Ok(ExposureSeries {
        unit,
        values,
        rule: ExposureRule::Proportion { threshold },
    })
}

/// Applies a user mapping `(A_t, G_t·j) -> bool` at every period.
pub fn custom_exposure<F>(data: &PanelDataset, unit: usize, name: &str, rule: F) -> Result<ExposureSeries>
where
    F: Fn(&[f64], &[f64]) -> bool,
{
    let j = data.unit_index(unit)?;
    let n = data.interventional;
    let mut column = vec![0.0; n];
    let values = (0..data.periods)
        .map(|t| {
            for (i, c) in column.iter_mut().enumerate() {
                *c = data.edge(t, i, j);
            }
            rule(&data.treatments[t * n..(t + 1) * n], &column)
        })
        .collect();
    Ok(ExposureSeries {
        unit,
        values,
        rule: ExposureRule::Custom { name: name.to_string() },
    })
}

/// Dispatches on a parsed rule.
pub fn exposure_for(data: &PanelDataset, unit: usize, rule: &ExposureRule) -> Result<ExposureSeries> {
    match rule {
        ExposureRule::Threshold { d } => threshold_exposure(data, unit, *d),
        ExposureRule::Proportion { threshold } => proportion_exposure(data, unit, *threshold),
        other => Err(Error::InvalidParameter(format!(
            "rule {other} cannot be computed from treatments and network"
        ))),
    }
}
