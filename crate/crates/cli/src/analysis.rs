//! Panel commands: match, estimate, test-global and run.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use bimatch_core::data::{balance_columns, BalanceCovariateSet};
use bimatch_core::estimator::{impute_and_estimate, naive_t, Estimand};
use bimatch_core::exposure::{exposure_for, ExposureRule, ExposureSeries};
use bimatch_core::inference::{global_test, naive_wald, wald, GlobalTestResult, InferenceResult};
use bimatch_core::io::{read_panel, PanelInput};
use bimatch_core::matcher::{solve_with, MatchSet, MatchingProblem, Method, SolverOptions, TuningParams};
use bimatch_core::Error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::args::{EstimateArgs, MatchArgs, RunArgs, TestGlobalArgs, VERSION};
use crate::emit;

/// A match set with everything needed to estimate from it alone.
#[derive(Debug, Serialize, Deserialize)]
pub struct MatchDocument {
    pub version: String,
    pub unit: usize,
    pub exposure: ExposureRule,
    pub params: TuningParams,
    /// Outcome series of the unit; missing cells are null.
    pub outcomes: Vec<Option<f64>>,
    #[serde(flatten)]
    pub matches: MatchSet,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EstimateReport {
    pub version: String,
    pub unit: usize,
    pub method: Method,
    pub estimand: Estimand,
    pub tau_hat: f64,
    pub n_matched: usize,
    pub n_exposed: usize,
    pub prop_matched: f64,
    pub alpha: f64,
    pub std_error: f64,
    pub ci: [f64; 2],
    pub p_value: Option<f64>,
    pub params: TuningParams,
}

#[derive(Debug, Serialize)]
pub struct InferenceReport {
    pub version: String,
    pub unit: usize,
    pub method: String,
    #[serde(flatten)]
    pub inference: InferenceResult,
}

pub fn load(dir: &Path) -> Result<PanelInput> {
    let input = read_panel(dir).with_context(|| format!("reading panel {}", dir.display()))?;
    let report = input.dataset.validate();
    if !report.is_valid() {
        eprint!("{report}");
        return Err(Error::Validation(report).into());
    }
    Ok(input)
}

/// Exposure of `unit` from the rule or, without one, from supplied exposures.
pub fn unit_exposure(input: &PanelInput, unit: usize, rule: Option<&ExposureRule>) -> Result<ExposureSeries> {
    let data = &input.dataset;
    data.unit_index(unit)?;
    if let Some(rule) = rule {
        if data.interventional == 0 {
            return Err(Error::MissingExposureSource.into());
        }
        return Ok(exposure_for(data, unit, rule)?);
    }
    match input.exposures.as_ref() {
        Some(map) => {
            let values = map
                .get(&unit)
                .with_context(|| format!("exposures.csv has no rows for unit {unit}"))?;
            Ok(ExposureSeries {
                unit,
                values: values.clone(),
                rule: ExposureRule::Supplied,
            })
        }
        None if data.interventional == 0 => Err(Error::MissingExposureSource.into()),
        None => Err(Error::InvalidParameter("no exposures.csv supplied: pass --exposure threshold:d=K".into()).into()),
    }
}

fn unit_covariates(input: &PanelInput, exposure: &ExposureSeries) -> Result<BalanceCovariateSet> {
    let cols = balance_columns(&input.dataset, exposure.unit - 1, &input.weights)?;
    Ok(BalanceCovariateSet::standardize(cols, &exposure.values)?)
}

fn match_document(
    input: &PanelInput,
    exposure: &ExposureSeries,
    covariates: &BalanceCovariateSet,
    method: Method,
    params: &TuningParams,
    solver: &SolverOptions,
) -> Result<MatchDocument> {
    let problem = MatchingProblem::new(
        exposure.exposed_times(),
        exposure.unexposed_times(),
        covariates.clone(),
        params.clone(),
        method,
    )?;
    let matches = solve_with(&problem, solver);
    let outcomes = input
        .dataset
        .outcome_series(exposure.unit - 1)
        .into_iter()
        .map(|y| y.is_finite().then_some(y))
        .collect();
    Ok(MatchDocument {
        version: VERSION.to_string(),
        unit: exposure.unit,
        exposure: exposure.rule.clone(),
        params: params.clone(),
        outcomes,
        matches,
    })
}

fn estimate_document(doc: &MatchDocument, alpha: f64) -> Result<(EstimateReport, InferenceReport)> {
    let outcomes: Vec<f64> = doc.outcomes.iter().map(|y| y.unwrap_or(f64::NAN)).collect();
    let estimate = impute_and_estimate(&doc.matches, &outcomes)?;
    let inference = wald(&estimate, alpha)?;
    let report = EstimateReport {
        version: VERSION.to_string(),
        unit: doc.unit,
        method: doc.matches.method,
        estimand: estimate.estimand,
        tau_hat: estimate.tau_hat,
        n_matched: estimate.n_matched(),
        n_exposed: estimate.n_exposed,
        prop_matched: estimate.prop_matched,
        alpha,
        std_error: inference.std_error,
        ci: inference.ci,
        p_value: inference.p_value,
        params: doc.params.clone(),
    };
    let inference = InferenceReport {
        version: VERSION.to_string(),
        unit: doc.unit,
        method: doc.matches.method.to_string(),
        inference,
    };
    Ok((report, inference))
}

pub fn run_match(args: &MatchArgs) -> Result<()> {
    let params = args.tuning.params();
    params.validate()?;
    let input = load(&args.data)?;
    let exposure = unit_exposure(&input, args.unit, args.exposure.as_ref())?;
    let covariates = unit_covariates(&input, &exposure)?;
    let doc = match_document(
        &input,
        &exposure,
        &covariates,
        args.method,
        &params,
        &args.tuning.solver(),
    )?;
    emit(&doc, args.out.as_deref())?;
    if doc.matches.is_empty() {
        return Err(Error::NoMatches.into());
    }
    Ok(())
}

pub fn run_estimate(args: &EstimateArgs) -> Result<()> {
    let text = fs::read_to_string(&args.from).with_context(|| format!("reading {}", args.from.display()))?;
    let doc: MatchDocument =
        serde_json::from_str(&text).with_context(|| format!("{} is not a match document", args.from.display()))?;
    let (report, _) = estimate_document(&doc, args.alpha)?;
    emit(&report, args.out.as_deref())
}

fn report_p_value(path: &Path) -> Result<(usize, Option<f64>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let parse = |message: &str| Error::Parse {
        file: path.display().to_string(),
        message: message.to_string(),
    };
    let unit = value
        .get("unit")
        .and_then(|u| u.as_u64())
        .ok_or_else(|| parse("missing unit"))?;
    let p = match value.get("p_value") {
        None => return Err(parse("missing p_value").into()),
        Some(p) => p.as_f64(),
    };
    Ok((unit as usize, p))
}

pub fn run_test_global(args: &TestGlobalArgs) -> Result<()> {
    let p_values = args
        .from
        .iter()
        .map(|p| report_p_value(p))
        .collect::<Result<Vec<_>>>()?;
    let result = global_test(&p_values, args.alpha)?;
    emit(&result, args.out.as_deref())
}

/// Results of one method on one unit.
enum Fit {
    Done {
        doc: Box<MatchDocument>,
        estimate: Option<(EstimateReport, InferenceReport)>,
    },
    Failed(String),
}

struct UnitRun {
    unit: usize,
    n_exposed: usize,
    naive: Option<InferenceResult>,
    fits: Vec<Fit>,
}

fn analyse_unit(input: &PanelInput, unit: usize, args: &RunArgs, params: &TuningParams) -> Result<UnitRun> {
    let exposure = unit_exposure(input, unit, args.exposure.as_ref())?;
    let outcomes = input.dataset.outcome_series(unit - 1);
    let naive = naive_t(&exposure.values, &outcomes)
        .ok()
        .and_then(|e| naive_wald(&e, args.alpha).ok());
    let covariates = unit_covariates(input, &exposure);
    let solver = args.tuning.solver();
    let fits = args
        .methods
        .iter()
        .map(|&method| {
            let cov = match &covariates {
                Ok(c) => c,
                Err(e) => return Fit::Failed(e.to_string()),
            };
            match match_document(input, &exposure, cov, method, params, &solver) {
                Err(e) => Fit::Failed(e.to_string()),
                Ok(doc) => {
                    let estimate = estimate_document(&doc, args.alpha).ok();
                    Fit::Done {
                        doc: Box::new(doc),
                        estimate,
                    }
                }
            }
        })
        .collect();
    Ok(UnitRun {
        unit,
        n_exposed: exposure.n_exposed(),
        naive,
        fits,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn cell(tau: Option<f64>, p: Option<f64>) -> String {
    match (tau, p) {
        (Some(t), Some(p)) => format!("{t:.3} ({p:.3})"),
        (Some(t), None) => format!("{t:.3} (-)"),
        _ => "-".to_string(),
    }
}

fn summary_table(runs: &[UnitRun], methods: &[Method], globals: &[(Method, GlobalTestResult)]) -> String {
    let mut s = String::new();
    let width = 18;
    let _ = write!(s, "{:<8}", "method");
    for r in runs {
        let _ = write!(s, "{:>width$}", format!("unit {}", r.unit));
    }
    s.push('\n');
    let _ = write!(s, "{:<8}", "N-t");
    for r in runs {
        let n = r.naive.as_ref();
        let _ = write!(s, "{:>width$}", cell(n.map(|x| x.tau_hat), n.and_then(|x| x.p_value)));
    }
    s.push('\n');
    for (k, m) in methods.iter().enumerate() {
        let _ = write!(s, "{:<8}", m.to_string());
        for r in runs {
            let text = match &r.fits[k] {
                Fit::Done {
                    estimate: Some((e, _)), ..
                } => cell(Some(e.tau_hat), e.p_value),
                _ => cell(None, None),
            };
            let _ = write!(s, "{text:>width$}");
        }
        s.push('\n');
    }
    s.push('\n');
    let _ = write!(s, "{:<8}", "exposed");
    for r in runs {
        let _ = write!(s, "{:>width$}", r.n_exposed);
    }
    s.push('\n');
    for (k, m) in methods.iter().enumerate() {
        let _ = write!(s, "{:<8}", format!("n {m}"));
        for r in runs {
            let n = match &r.fits[k] {
                Fit::Done { doc, .. } => doc.matches.len().to_string(),
                Fit::Failed(_) => "-".to_string(),
            };
            let _ = write!(s, "{n:>width$}");
        }
        s.push('\n');
    }
    if !globals.is_empty() {
        s.push('\n');
        for (m, g) in globals {
            let affected: Vec<String> = g.affected.iter().map(|u| u.to_string()).collect();
            let _ = writeln!(
                s,
                "global {m}: {} at alpha {} (affected: {})",
                if g.reject_global { "reject" } else { "retain" },
                g.alpha,
                if affected.is_empty() {
                    "none".into()
                } else {
                    affected.join(", ")
                }
            );
        }
    }
    s
}

fn summary_csv(runs: &[UnitRun], methods: &[Method]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut s = String::from("unit,method,tau_hat,ci_lo,ci_hi,p_value,n_exposed,n_matched,prop_matched,note\n");
    for r in runs {
        let n = r.naive.as_ref();
        let _ = writeln!(
            s,
            "{},N-t,{},{},{},{},{},,,",
            r.unit,
            opt(n.map(|x| x.tau_hat)),
            opt(n.map(|x| x.ci[0])),
            opt(n.map(|x| x.ci[1])),
            opt(n.and_then(|x| x.p_value)),
            r.n_exposed
        );
        for (m, fit) in methods.iter().zip(&r.fits) {
            match fit {
                Fit::Done { doc, estimate } => {
                    let e = estimate.as_ref().map(|(e, _)| e);
                    let _ = writeln!(
                        s,
                        "{},{m},{},{},{},{},{},{},{},{}",
                        r.unit,
                        opt(e.map(|x| x.tau_hat)),
                        opt(e.map(|x| x.ci[0])),
                        opt(e.map(|x| x.ci[1])),
                        opt(e.and_then(|x| x.p_value)),
                        r.n_exposed,
                        doc.matches.len(),
                        doc.matches.matched_proportion(),
                        if e.is_none() { "no estimate" } else { "" }
                    );
                }
                Fit::Failed(msg) => {
                    let _ = writeln!(s, "{},{m},,,,,{},,,{}", r.unit, r.n_exposed, msg.replace(',', ";"));
                }
            }
        }
    }
    s
}

pub fn run_pipeline(args: &RunArgs) -> Result<()> {
    let params = args.tuning.params();
    params.validate()?;
    let input = load(&args.data)?;
    let units: Vec<usize> = match &args.units {
        Some(u) => u.clone(),
        None => (1..=input.dataset.outcome_units).collect(),
    };
    for &u in &units {
        input.dataset.unit_index(u)?;
    }
    let runs = units
        .par_iter()
        .map(|&u| analyse_unit(&input, u, args, &params))
        .collect::<Result<Vec<_>>>()?;

    let out = &args.out;
    fs::create_dir_all(out)?;
    let mut globals = Vec::new();
    for (k, &method) in args.methods.iter().enumerate() {
        let dir = out.join(method.slug());
        let mut p_values = Vec::new();
        for r in &runs {
            let unit_dir = dir.join(format!("unit_{}", r.unit));
            match &r.fits[k] {
                Fit::Done { doc, estimate } => {
                    write_json(&unit_dir.join("matchset.json"), doc)?;
                    if let Some((e, i)) = estimate {
                        write_json(&unit_dir.join("estimate.json"), e)?;
                        write_json(&unit_dir.join("inference.json"), i)?;
                    }
                    p_values.push((r.unit, estimate.as_ref().and_then(|(e, _)| e.p_value)));
                }
                Fit::Failed(msg) => {
                    eprintln!("unit {} {method}: {msg}", r.unit);
                    p_values.push((r.unit, None));
                }
            }
        }
        if runs.len() > 1 {
            let g = global_test(&p_values, args.alpha)?;
            write_json(&dir.join("global_test.json"), &g)?;
            globals.push((method, g));
        }
    }
    let table = summary_table(&runs, &args.methods, &globals);
    fs::write(out.join("summary.txt"), &table)?;
    fs::write(out.join("summary.csv"), summary_csv(&runs, &args.methods))?;
    write_json(
        &out.join("run.json"),
        &serde_json::json!({
            "version": VERSION,
            "data": args.data,
            "units": units,
            "methods": args.methods,
            "exposure": args.exposure,
            "alpha": args.alpha,
            "params": params,
            "solver": args.tuning.solver(),
        }),
    )?;
    print!("{table}");

    let any_match = runs
        .iter()
        .flat_map(|r| &r.fits)
        .any(|f| matches!(f, Fit::Done { doc, .. } if !doc.matches.is_empty()));
    if !any_match {
        return Err(Error::NoMatches.into());
    }
    Ok(())
}
