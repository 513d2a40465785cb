//! Long CSV formats for panels, exposures and weights.
//!
//! All indices in files are one-based. Omitted `network.csv` rows mean
//! `g = 0`; any other omitted cell is read as missing and rejected by
//! validation.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::data::{CovariateTensor, PanelDataset, SummaryWeights, WeightSpec};
use crate::error::{Error, Result};
use crate::exposure::ExposureSeries;
use crate::reproduce::Reproduction;
use crate::simulator::{GlobalSummaryRow, SummaryRow};

pub const TREATMENTS: &str = "treatments.csv";
pub const NETWORK: &str = "network.csv";
pub const OUTCOMES: &str = "outcomes.csv";
pub const X_COVARIATES: &str = "x_covariates.csv";
pub const W_COVARIATES: &str = "w_covariates.csv";
pub const P_COVARIATES: &str = "p_covariates.csv";
pub const Q_WEIGHTS: &str = "q_weights.csv";
pub const EXPOSURES: &str = "exposures.csv";

/// A panel read from disk together with the optional side files.
#[derive(Debug, Clone)]
pub struct PanelInput {
    pub dataset: PanelDataset,
    /// Supplied exposures keyed by one-based outcome unit.
    pub exposures: Option<BTreeMap<usize, Vec<bool>>>,
    pub weights: WeightSpec,
}

#[derive(Deserialize)]
struct TreatmentRow {
    t: usize,
    i: usize,
    a: f64,
}

#[derive(Deserialize)]
struct NetworkRow {
    t: usize,
    i: usize,
    j: usize,
    g: f64,
}

#[derive(Deserialize)]
struct OutcomeRow {
    t: usize,
    j: usize,
    y: f64,
}

#[derive(Deserialize)]
struct UnitCovariateRow {
    t: usize,
    #[serde(alias = "j")]
    i: usize,
    name: String,
    value: f64,
}

#[derive(Deserialize)]
struct PairCovariateRow {
    t: usize,
    i: usize,
    j: usize,
    name: String,
    value: f64,
}

#[derive(Deserialize)]
struct WeightRow {
    covariate: String,
    i: usize,
    q: f64,
}

#[derive(Deserialize)]
struct ExposureRow {
    t: usize,
    j: usize,
    e: u8,
}

fn parse_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        file: path.display().to_string(),
        message: message.into(),
    }
}

fn read_rows<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_error(path, e.to_string()))?;
    reader
        .deserialize()
        .map(|row| row.map_err(|e| parse_error(path, e.to_string())))
        .collect()
}

fn optional<R: DeserializeOwned>(dir: &Path, name: &str) -> Result<Option<Vec<R>>> {
    let path = dir.join(name);
    if path.exists() {
        read_rows(&path).map(Some)
    } else {
        Ok(None)
    }
}

fn one_based(path: &Path, what: &str, v: usize) -> Result<usize> {
    if v == 0 {
        return Err(parse_error(path, format!("{what} indices are one-based")));
    }
    Ok(v - 1)
}

/// Names in order of first appearance.
fn names_of<'a>(names: impl Iterator<Item = &'a String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for n in names {
        if !out.contains(n) {
            out.push(n.clone());
        }
    }
    out
}

/// Reads a panel directory. Exposure information must come from either
/// `treatments.csv` plus `network.csv` or from `exposures.csv`.
pub fn read_panel(dir: &Path) -> Result<PanelInput> {
    let path = |name: &str| dir.join(name);
    let outcomes: Vec<OutcomeRow> = read_rows(&path(OUTCOMES))?;
    let treatments: Option<Vec<TreatmentRow>> = optional(dir, TREATMENTS)?;
    let network: Option<Vec<NetworkRow>> = optional(dir, NETWORK)?;
    let exposure_rows: Option<Vec<ExposureRow>> = optional(dir, EXPOSURES)?;
    let xs: Vec<UnitCovariateRow> = optional(dir, X_COVARIATES)?.unwrap_or_default();
    let ws: Vec<UnitCovariateRow> = optional(dir, W_COVARIATES)?.unwrap_or_default();
    let ps: Vec<PairCovariateRow> = optional(dir, P_COVARIATES)?.unwrap_or_default();
    let qs: Vec<WeightRow> = optional(dir, Q_WEIGHTS)?.unwrap_or_default();

    let has_graph = treatments.is_some() && network.is_some();
    if !has_graph && exposure_rows.is_none() {
        return Err(Error::MissingExposureSource);
    }
    let treatments = treatments.unwrap_or_default();
    let network = network.unwrap_or_default();

    let periods = outcomes
        .iter()
        .map(|r| r.t)
        .chain(treatments.iter().map(|r| r.t))
        .chain(exposure_rows.iter().flatten().map(|r| r.t))
        .max()
        .unwrap_or(0);
    let m = outcomes.iter().map(|r| r.j).max().unwrap_or(0);
    let n = treatments
        .iter()
        .map(|r| r.i)
        .chain(network.iter().map(|r| r.i))
        .chain(xs.iter().map(|r| r.i))
        .chain(ps.iter().map(|r| r.i))
        .max()
        .unwrap_or(0);

    let mut a = vec![f64::NAN; if has_graph { periods * n } else { 0 }];
    let mut g = vec![0.0; periods * n * m];
    let mut y = vec![f64::NAN; periods * m];
    if has_graph {
        let p = path(TREATMENTS);
        for r in &treatments {
            let (t, i) = (one_based(&p, "t", r.t)?, one_based(&p, "i", r.i)?);
            a[t * n + i] = r.a;
        }
        let p = path(NETWORK);
        for r in &network {
            let (t, i, j) = (
                one_based(&p, "t", r.t)?,
                one_based(&p, "i", r.i)?,
                one_based(&p, "j", r.j)?,
            );
            if t >= periods || j >= m {
                return Err(parse_error(&p, format!("row (t={}, j={}) outside the panel", r.t, r.j)));
            }
            g[(t * n + i) * m + j] = r.g;
        }
    } else {
        a = vec![0.0; periods * n];
    }
    let p = path(OUTCOMES);
    for r in &outcomes {
        let (t, j) = (one_based(&p, "t", r.t)?, one_based(&p, "j", r.j)?);
        y[t * m + j] = r.y;
    }

    let mut data = PanelDataset::new(periods, n, m, a, g, y);
    data.x = unit_tensor(&path(X_COVARIATES), &xs, periods, n)?;
    data.w = unit_tensor(&path(W_COVARIATES), &ws, periods, m)?;
    data.p = pair_tensor(&path(P_COVARIATES), &ps, periods, n, m)?;

    let exposures = match exposure_rows {
        Some(rows) => Some(exposure_map(&path(EXPOSURES), &rows, periods, m)?),
        None => None,
    };
    let weights = weight_spec(&path(Q_WEIGHTS), &qs, n)?;
    Ok(PanelInput {
        dataset: data,
        exposures,
        weights,
    })
}

fn unit_tensor(path: &Path, rows: &[UnitCovariateRow], periods: usize, units: usize) -> Result<CovariateTensor> {
    let names = names_of(rows.iter().map(|r| &r.name));
    let k = names.len();
    let mut values = vec![f64::NAN; periods * units * k];
    for r in rows {
        let (t, i) = (one_based(path, "t", r.t)?, one_based(path, "unit", r.i)?);
        if t >= periods || i >= units {
            return Err(parse_error(
                path,
                format!("row (t={}, unit={}) outside the panel", r.t, r.i),
            ));
        }
        let c = names.iter().position(|n| n == &r.name).unwrap();
        values[(t * units + i) * k + c] = r.value;
    }
    Ok(CovariateTensor::new(names, values))
}

fn pair_tensor(path: &Path, rows: &[PairCovariateRow], periods: usize, n: usize, m: usize) -> Result<CovariateTensor> {
    let names = names_of(rows.iter().map(|r| &r.name));
    let k = names.len();
    let mut values = vec![f64::NAN; periods * n * m * k];
    for r in rows {
        let (t, i, j) = (
            one_based(path, "t", r.t)?,
            one_based(path, "i", r.i)?,
            one_based(path, "j", r.j)?,
        );
        if t >= periods || j >= m {
            return Err(parse_error(
                path,
                format!("row (t={}, j={}) outside the panel", r.t, r.j),
            ));
        }
        let c = names.iter().position(|nm| nm == &r.name).unwrap();
        values[((t * n + i) * m + j) * k + c] = r.value;
    }
    Ok(CovariateTensor::new(names, values))
}

fn exposure_map(path: &Path, rows: &[ExposureRow], periods: usize, m: usize) -> Result<BTreeMap<usize, Vec<bool>>> {
    let mut cells: BTreeMap<usize, Vec<Option<bool>>> = BTreeMap::new();
    for r in rows {
        let t = one_based(path, "t", r.t)?;
        if r.j == 0 || r.j > m {
            return Err(parse_error(path, format!("outcome unit {} outside 1..={m}", r.j)));
        }
        if r.e > 1 {
            return Err(parse_error(path, format!("non-binary exposure {} at t={}", r.e, r.t)));
        }
        cells.entry(r.j).or_insert_with(|| vec![None; periods])[t] = Some(r.e == 1);
    }
    cells
        .into_iter()
        .map(|(j, series)| {
            let values = series
                .into_iter()
                .enumerate()
                .map(|(t, e)| {
                    e.ok_or_else(|| parse_error(path, format!("missing exposure for unit {j} at t={}", t + 1)))
                })
                .collect::<Result<Vec<bool>>>()?;
            Ok((j, values))
        })
        .collect()
}

fn weight_spec(path: &Path, rows: &[WeightRow], n: usize) -> Result<WeightSpec> {
    let mut by_name: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in rows {
        let i = one_based(path, "i", r.i)?;
        if i >= n {
            return Err(parse_error(
                path,
                format!("interventional unit {} outside 1..={n}", r.i),
            ));
        }
        by_name.entry(r.covariate.clone()).or_insert_with(|| vec![0.0; n])[i] = r.q;
    }
    let mut spec = WeightSpec::default();
    for (name, q) in by_name {
        if name.is_empty() || name == "*" {
            spec.default = Some(SummaryWeights::new(None, q)?);
        } else {
            let w = SummaryWeights::new(Some(name.clone()), q)?;
            spec.per_covariate.insert(name, w);
        }
    }
    Ok(spec)
}

fn writer(dir: &Path, name: &str, header: &[&str]) -> Result<csv::Writer<File>> {
    let mut w = csv::Writer::from_path(dir.join(name))?;
    w.write_record(header)?;
    Ok(w)
}

/// Writes every block of `data` in the long formats. Network rows are
/// written only where `g = 1`.
pub fn write_panel(dir: &Path, data: &PanelDataset) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let (periods, n, m) = (data.periods, data.interventional, data.outcome_units);
    let mut written = Vec::new();

    let mut w = writer(dir, TREATMENTS, &["t", "i", "a"])?;
    for t in 0..periods {
        for i in 0..n {
            w.serialize((t + 1, i + 1, data.treatment(t, i)))?;
        }
    }
    w.flush()?;
    written.push(dir.join(TREATMENTS));

    let mut w = writer(dir, NETWORK, &["t", "i", "j", "g"])?;
    for t in 0..periods {
        for i in 0..n {
            for j in 0..m {
                if data.edge(t, i, j) != 0.0 {
                    w.serialize((t + 1, i + 1, j + 1, data.edge(t, i, j)))?;
                }
            }
        }
    }
    w.flush()?;
    written.push(dir.join(NETWORK));

    let mut w = writer(dir, OUTCOMES, &["t", "j", "y"])?;
    for t in 0..periods {
        for j in 0..m {
            w.serialize((t + 1, j + 1, data.outcome(t, j)))?;
        }
    }
    w.flush()?;
    written.push(dir.join(OUTCOMES));

    if data.x.width() > 0 {
        let mut w = writer(dir, X_COVARIATES, &["t", "i", "name", "value"])?;
        for t in 0..periods {
            for i in 0..n {
                for (k, name) in data.x.names.iter().enumerate() {
                    w.serialize((t + 1, i + 1, name, data.x_at(t, i, k)))?;
                }
            }
        }
        w.flush()?;
        written.push(dir.join(X_COVARIATES));
    }
    if data.w.width() > 0 {
        let mut w = writer(dir, W_COVARIATES, &["t", "j", "name", "value"])?;
        for t in 0..periods {
            for j in 0..m {
                for (k, name) in data.w.names.iter().enumerate() {
                    w.serialize((t + 1, j + 1, name, data.w_at(t, j, k)))?;
                }
            }
        }
        w.flush()?;
        written.push(dir.join(W_COVARIATES));
    }
    if data.p.width() > 0 {
        let mut w = writer(dir, P_COVARIATES, &["t", "i", "j", "name", "value"])?;
        for t in 0..periods {
            for i in 0..n {
                for j in 0..m {
                    for (k, name) in data.p.names.iter().enumerate() {
                        w.serialize((t + 1, i + 1, j + 1, name, data.p_at(t, i, j, k)))?;
                    }
                }
            }
        }
        w.flush()?;
        written.push(dir.join(P_COVARIATES));
    }
    Ok(written)
}

/// Writes `exposures.csv` for the given series.
pub fn write_exposures(dir: &Path, series: &[ExposureSeries]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut w = writer(dir, EXPOSURES, &["t", "j", "e"])?;
    for s in series {
        for (t, &e) in s.values.iter().enumerate() {
            w.serialize((t + 1, s.unit, u8::from(e)))?;
        }
    }
    w.flush()?;
    Ok(dir.join(EXPOSURES))
}

/// Writes `q_weights.csv`; default weights use the covariate name `*`.
pub fn write_weights(dir: &Path, spec: &WeightSpec) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut w = writer(dir, Q_WEIGHTS, &["covariate", "i", "q"])?;
    let rows = spec
        .default
        .iter()
        .map(|q| ("*".to_string(), q))
        .chain(spec.per_covariate.iter().map(|(k, q)| (k.clone(), q)));
    for (name, q) in rows {
        for (i, v) in q.q.iter().enumerate() {
            w.serialize((&name, i + 1, v))?;
        }
    }
    w.flush()?;
    Ok(dir.join(Q_WEIGHTS))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Monte-Carlo summary with the columns Bias, MSE, Cover and Prop.
pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "method", "target", "reps", "failures", "mean", "bias", "mse", "cover", "prop",
    ])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            serde_json::to_value(r.target)?.as_str().unwrap_or_default().to_string(),
            r.reps.to_string(),
            r.failures.to_string(),
            format!("{}", r.mean_estimate),
            format!("{}", r.bias),
            format!("{}", r.mse),
            format!("{}", r.coverage),
            opt(r.prop),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_global_summary_csv(path: &Path, rows: &[GlobalSummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "method",
        "reps",
        "mean",
        "individual_rejection",
        "min_p_rejection",
        "global_rejection",
    ])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.reps.to_string(),
            format!("{}", r.mean_estimate),
            format!("{}", r.individual_rejection),
            format!("{}", r.min_p_rejection),
            format!("{}", r.global_rejection),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Simulated rows next to the published ones, and the tolerance checks.
pub fn write_reproduction_csv(dir: &Path, r: &Reproduction) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if !r.rows.is_empty() {
        let path = dir.join("summary.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "section",
            "method",
            "reps",
            "bias",
            "mse",
            "cover",
            "prop",
            "published_bias",
            "published_mse",
            "published_cover",
            "published_prop",
        ])?;
        for c in &r.rows {
            let s = &c.summary;
            w.write_record([
                c.section.clone(),
                s.method.clone(),
                s.reps.to_string(),
                format!("{}", s.bias),
                format!("{}", s.mse),
                format!("{}", s.coverage),
                opt(s.prop),
                opt(c.published.map(|p| p.bias)),
                opt(c.published.and_then(|p| p.mse)),
                opt(c.published.map(|p| p.coverage)),
                opt(c.published.and_then(|p| p.prop)),
            ])?;
        }
        w.flush()?;
        written.push(path);
    }
    if !r.global_rows.is_empty() {
        let path = dir.join("summary_global.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "section",
            "method",
            "reps",
            "mean",
            "individual_rejection",
            "min_p_rejection",
            "global_rejection",
            "published_global_rejection",
        ])?;
        for c in &r.global_rows {
            let s = &c.summary;
            w.write_record([
                c.section.clone(),
                s.method.clone(),
                s.reps.to_string(),
                format!("{}", s.mean_estimate),
                format!("{}", s.individual_rejection),
                format!("{}", s.min_p_rejection),
                format!("{}", s.global_rejection),
                opt(c.published.map(|p| p.global_rejection)),
            ])?;
        }
        w.flush()?;
        written.push(path);
    }
    let path = dir.join("checks.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["check", "value", "lo", "hi", "published", "pass"])?;
    for c in &r.checks {
        w.write_record([
            c.label.clone(),
            format!("{}", c.value),
            format!("{}", c.lo),
            format!("{}", c.hi),
            opt(c.published),
            c.pass.to_string(),
        ])?;
    }
    w.flush()?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exposure::{threshold_exposure, ExposureRule};

    fn toy() -> PanelDataset {
        let (t, n, m) = (4, 3, 2);
        let a = (0..t * n).map(|k| f64::from((k % 3 == 0) as u8)).collect();
        let g = (0..t * n * m).map(|k| f64::from((k % 2 == 0) as u8)).collect();
        let y = (0..t * m).map(|k| k as f64 * 0.5 - 1.0).collect();
        let mut data = PanelDataset::new(t, n, m, a, g, y);
        data.x = CovariateTensor::new(vec!["x1".into()], (0..t * n).map(|k| k as f64).collect());
        data.w = CovariateTensor::new(
            vec!["w1".into(), "w2".into()],
            (0..t * m * 2).map(|k| (k as f64).sqrt()).collect(),
        );
        data.p = CovariateTensor::new(vec!["p".into()], (0..t * n * m).map(|k| k as f64 / 7.0).collect());
        data
    }

    #[test]
    fn panel_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = toy();
        write_panel(dir.path(), &data).unwrap();
        let back = read_panel(dir.path()).unwrap();
        assert_eq!(back.dataset, data);
        assert!(back.exposures.is_none());
        assert!(back.dataset.validate().is_valid());
    }

    #[test]
    fn exposures_and_weights_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = toy();
        write_panel(dir.path(), &data).unwrap();
        let series = vec![threshold_exposure(&data, 2, 1).unwrap()];
        write_exposures(dir.path(), &series).unwrap();
        let mut spec = WeightSpec::default();
        spec.default = Some(SummaryWeights::new(None, vec![0.5, 0.5, 0.0]).unwrap());
        spec.per_covariate.insert(
            "x1".into(),
            SummaryWeights::new(Some("x1".into()), vec![1.0, 0.0, 0.0]).unwrap(),
        );
        write_weights(dir.path(), &spec).unwrap();
        let back = read_panel(dir.path()).unwrap();
        assert_eq!(back.exposures.unwrap()[&2], series[0].values);
        assert_eq!(back.weights, spec);
        assert_eq!(series[0].rule, ExposureRule::Threshold { d: 1 });
    }

    #[test]
    fn missing_network_without_exposures_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        write_panel(dir.path(), &toy()).unwrap();
        fs::remove_file(dir.path().join(NETWORK)).unwrap();
        assert!(matches!(read_panel(dir.path()), Err(Error::MissingExposureSource)));
    }

    #[test]
    fn exposures_alone_suffice() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(OUTCOMES), "t,j,y\n1,1,0.5\n2,1,1.5\n3,1,2.0\n").unwrap();
        fs::write(dir.path().join(EXPOSURES), "t,j,e\n1,1,1\n2,1,0\n3,1,1\n").unwrap();
        let input = read_panel(dir.path()).unwrap();
        assert_eq!(input.dataset.periods, 3);
        assert_eq!(input.exposures.unwrap()[&1], vec![true, false, true]);
        assert!(input.dataset.validate().is_valid());
    }

    #[test]
    fn gaps_surface_as_validation_issues() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(OUTCOMES), "t,j,y\n1,1,0.5\n3,1,2.0\n").unwrap();
        fs::write(dir.path().join(TREATMENTS), "t,i,a\n1,1,1\n2,1,0\n3,1,1\n").unwrap();
        fs::write(dir.path().join(NETWORK), "t,i,j,g\n1,1,1,1\n").unwrap();
        let input = read_panel(dir.path()).unwrap();
        let report = input.dataset.validate();
        assert_eq!(report.issues.len(), 1);
        assert!(report.to_string().contains("missing cell in outcomes at t=2"));
    }

    #[test]
    fn zero_index_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(OUTCOMES), "t,j,y\n0,1,0.5\n").unwrap();
        fs::write(dir.path().join(EXPOSURES), "t,j,e\n1,1,1\n").unwrap();
        assert!(matches!(read_panel(dir.path()), Err(Error::Parse { .. })));
    }
}
