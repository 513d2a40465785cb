use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::{MatchSet, MatchingProblem, VERIFY_SLACK};
use crate::data::CovariateKind;

/// One aggregate constraint row: `|lhs| ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSlack {
    /// Constraint family and row, e.g. `A.2`.
    pub id: String,
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − |lhs|`
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub id: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateImbalance {
    pub label: String,
    pub kind: CovariateKind,
    /// Mean of `c_te − mean(c_u)` on the scaled column.
    pub mean_imbalance: f64,
    /// The same on the raw column.
    pub raw_mean_imbalance: f64,
    /// Largest per-match `|c_te − mean(c_u)|` (scaled).
    pub max_gap: f64,
    /// Whether the column generated a constraint.
    pub constrained: bool,
}

/// Balance diagnostics of a match set, recomputed from scratch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub feasible: bool,
    pub n_matches: usize,
    /// `Σ (t_e − mean t_u) / n`
    pub mean_time_imbalance: f64,
    pub max_time_gap: f64,
    pub covariates: Vec<CovariateImbalance>,
    pub slacks: Vec<ConstraintSlack>,
    pub violations: Vec<Violation>,
    /// Columns excluded because they are constant within the classes.
    pub dropped: Vec<String>,
}

struct Row {
    exposed: i64,
    unexposed: Vec<i64>,
}

/// Checks every constraint of the problem's program against `set`.
///
/// Constraint ids: `.1` uniqueness and class membership, `.2` mean time
/// balance, `.3` per-match time window and ordering, `.4` outcome-unit and
/// auxiliary columns, `.5` summarized interventional and network columns,
/// `.6` the per-match covariate cap.
pub fn verify_feasibility(set: &MatchSet, problem: &MatchingProblem) -> BalanceReport {
    let letter = problem.method.letter();
    let id = |row: u8| format!("{letter}.{row}");
    let params = &problem.params;
    let mut violations = Vec::new();
    let mut fail = |row: u8, detail: String| violations.push(Violation { id: id(row), detail });

    if set.method != problem.method {
        fail(
            1,
            format!("set solved with {} but problem is {}", set.method, problem.method),
        );
    }
    if !problem.method.allows_pairs() && !set.pairs.is_empty() {
        fail(1, "pairs are not allowed by this program".into());
    }
    if !problem.method.allows_triples() && !set.triples.is_empty() {
        fail(1, "triples are not allowed by this program".into());
    }

    let rows: Vec<Row> = set
        .pairs
        .iter()
        .map(|&(e, u)| Row {
            exposed: e,
            unexposed: vec![u],
        })
        .chain(set.triples.iter().map(|&(e, a, b)| Row {
            exposed: e,
            unexposed: vec![a, b],
        }))
        .collect();

    let exposed: HashSet<i64> = problem.exposed.iter().copied().collect();
    let unexposed: HashSet<i64> = problem.unexposed.iter().copied().collect();
    let mut seen_e = BTreeSet::new();
    let mut seen_u = BTreeSet::new();
    for r in &rows {
        if !exposed.contains(&r.exposed) {
            fail(1, format!("t={} is not an exposed period", r.exposed));
        }
        if !seen_e.insert(r.exposed) {
            fail(1, format!("exposed period t={} used twice", r.exposed));
        }
        for &u in &r.unexposed {
            if !unexposed.contains(&u) {
                fail(1, format!("t={u} is not an unexposed period"));
            }
            if !seen_u.insert(u) {
                fail(1, format!("unexposed period t={u} used twice"));
            }
        }
    }

    let eps = i64::from(params.eps);
    let mut max_time_gap = 0.0f64;
    let mut time_sum = 0.0;
    for r in &rows {
        for &u in &r.unexposed {
            let gap = (r.exposed - u).abs();
            max_time_gap = max_time_gap.max(gap as f64);
            if gap > eps {
                fail(3, format!("|{} - {}| exceeds eps={}", r.exposed, u, eps));
            }
        }
        if let [a, b] = r.unexposed[..] {
            if !(a < r.exposed && r.exposed < b) {
                fail(3, format!("triple ({}, {a}, {b}) is not ordered", r.exposed));
            }
        }
        let mean = r.unexposed.iter().sum::<i64>() as f64 / r.unexposed.len() as f64;
        time_sum += r.exposed as f64 - mean;
    }

    let n = rows.len() as f64;
    let slack = VERIFY_SLACK * (1.0 + n);
    let mut slacks = Vec::new();
    let row = |sl: &mut Vec<ConstraintSlack>, r: u8, label: &str, lhs: f64, rhs: f64| {
        sl.push(ConstraintSlack {
            id: id(r),
            label: label.to_string(),
            lhs,
            rhs,
            slack: rhs - lhs.abs(),
        });
        lhs.abs() <= rhs + slack
    };
    if !row(&mut slacks, 2, "time", time_sum, params.delta * n) {
        fail(2, format!("time imbalance {time_sum} exceeds {}", params.delta * n));
    }

    let cov = &problem.covariates;
    let in_range = |t: i64| t >= 1 && (t as usize) <= cov.raw.first().map_or(usize::MAX, Vec::len);
    let mut covariates = Vec::new();
    for c in 0..cov.len() {
        let constrained = !cov.dropped[c] && params.balances_covariates();
        let (mut scaled, mut raw, mut max_gap) = (0.0, 0.0, 0.0f64);
        for r in &rows {
            if !in_range(r.exposed) || !r.unexposed.iter().all(|&u| in_range(u)) {
                continue;
            }
            let at = |t: i64| cov.raw[c][(t - 1) as usize];
            let mean_u = r.unexposed.iter().map(|&u| at(u)).sum::<f64>() / r.unexposed.len() as f64;
            let diff = at(r.exposed) - mean_u;
            raw += diff;
            scaled += diff / cov.scale[c];
            let gap = (diff / cov.scale[c]).abs();
            max_gap = max_gap.max(gap);
            if let Some(cap) = params.delta_dprime {
                if !cov.dropped[c] && gap > cap + VERIFY_SLACK {
                    fail(
                        6,
                        format!("match at t={} has gap {gap} on {}", r.exposed, cov.labels[c]),
                    );
                }
            }
        }
        if constrained {
            let r = match cov.kinds[c] {
                CovariateKind::Outcome | CovariateKind::Auxiliary => 4,
                CovariateKind::Interventional | CovariateKind::Network => 5,
            };
            if !row(&mut slacks, r, &cov.labels[c], scaled, params.delta_prime * n) {
                fail(
                    r,
                    format!(
                        "imbalance {scaled} on {} exceeds {}",
                        cov.labels[c],
                        params.delta_prime * n
                    ),
                );
            }
        }
        covariates.push(CovariateImbalance {
            label: cov.labels[c].clone(),
            kind: cov.kinds[c],
            mean_imbalance: if n > 0.0 { scaled / n } else { 0.0 },
            raw_mean_imbalance: if n > 0.0 { raw / n } else { 0.0 },
            max_gap,
            constrained,
        });
    }

    BalanceReport {
        feasible: violations.is_empty(),
        n_matches: rows.len(),
        mean_time_imbalance: if n > 0.0 { time_sum / n } else { 0.0 },
        max_time_gap,
        covariates,
        slacks,
        violations,
        dropped: cov.dropped_labels(),
    }
}
