#![allow(dead_code)]

use bimatch_core::data::{BalanceCovariateSet, CovariateKind, RawColumns};
use bimatch_core::matcher::{MatchingProblem, Method, TuningParams};
use rand::seq::SliceRandom;
use rand::Rng;

/// A small random problem: `T ≤ 20`, `|𝒯_e| ≤ 5`, `|𝒯_u| ≤ 7`.
pub fn small_instance<R: Rng>(rng: &mut R, method: Method) -> MatchingProblem {
    let horizon = rng.random_range(4..=20usize);
    let mut times: Vec<i64> = (1..=horizon as i64).collect();
    times.shuffle(rng);
    let n_e = rng.random_range(1..=5usize.min(horizon - 1));
    let n_u = rng.random_range(1..=7usize.min(horizon - n_e));
    let exposed = times[..n_e].to_vec();
    let unexposed = times[n_e..n_e + n_u].to_vec();
    let delta = [0.0, 1.0, 2.0][rng.random_range(0..3)];
    let delta_prime = [0.05, 0.1, f64::INFINITY][rng.random_range(0..3)];
    let eps = [2, 6][rng.random_range(0..2)];
    let params = TuningParams::new(delta, delta_prime, eps);

    let mut cols = RawColumns::default();
    for k in 0..rng.random_range(0..3) {
        let values = (0..horizon).map(|_| rng.random_range(0.0..1.0)).collect();
        cols.push(format!("c{k}"), CovariateKind::Outcome, values);
    }
    let mut flags = vec![false; horizon];
    for &t in &exposed {
        flags[t as usize - 1] = true;
    }
    let covariates = if rng.random_bool(0.5) {
        BalanceCovariateSet::standardize(cols, &flags).unwrap()
    } else {
        BalanceCovariateSet::unscaled(cols)
    };
    MatchingProblem::new(exposed, unexposed, covariates, params, method).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Best {
    pub count: usize,
    pub gap: f64,
}

/// Exhaustive search over all match sets of the problem's program.
pub fn brute_force(p: &MatchingProblem) -> Best {
    let eps = i64::from(p.params.eps);
    let kept: Vec<usize> = p.covariates.kept().collect();
    let balance = p.params.adjust && p.params.delta_prime.is_finite();
    let mut options: Vec<Vec<Vec<i64>>> = Vec::new();
    for &e in &p.exposed {
        let mut opts = Vec::new();
        for &u in &p.unexposed {
            if p.method != Method::OneToTwo && (e - u).abs() <= eps {
                opts.push(vec![u]);
            }
            for &v in &p.unexposed {
                if p.method != Method::OneToOne && u < e && e < v && e - u <= eps && v - e <= eps {
                    opts.push(vec![u, v]);
                }
            }
        }
        options.push(opts);
    }
    let mut best = Best { count: 0, gap: 0.0 };
    let mut chosen: Vec<(i64, Vec<i64>)> = Vec::new();
    let mut used: Vec<i64> = Vec::new();
    recurse(p, &options, 0, &mut chosen, &mut used, &kept, balance, &mut best);
    best
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    p: &MatchingProblem,
    options: &[Vec<Vec<i64>>],
    idx: usize,
    chosen: &mut Vec<(i64, Vec<i64>)>,
    used: &mut Vec<i64>,
    kept: &[usize],
    balance: bool,
    best: &mut Best,
) {
    if idx == options.len() {
        if !feasible(p, chosen, kept, balance) {
            return;
        }
        let gap: f64 = chosen
            .iter()
            .map(|(e, us)| (*e as f64 - us.iter().sum::<i64>() as f64 / us.len() as f64).abs())
            .sum();
        let n = chosen.len();
        if n > best.count || (n == best.count && gap < best.gap - 1e-9) {
            *best = Best { count: n, gap };
        }
        return;
    }
    recurse(p, options, idx + 1, chosen, used, kept, balance, best);
    for opt in &options[idx] {
        if opt.iter().any(|u| used.contains(u)) {
            continue;
        }
        used.extend(opt);
        chosen.push((p.exposed[idx], opt.clone()));
        recurse(p, options, idx + 1, chosen, used, kept, balance, best);
        chosen.pop();
        used.truncate(used.len() - opt.len());
    }
}

fn feasible(p: &MatchingProblem, chosen: &[(i64, Vec<i64>)], kept: &[usize], balance: bool) -> bool {
    let n = chosen.len() as f64;
    let slack = 5e-10 * (1.0 + n);
    let mean = |us: &Vec<i64>, f: &dyn Fn(i64) -> f64| us.iter().map(|&u| f(u)).sum::<f64>() / us.len() as f64;
    let time: f64 = chosen.iter().map(|(e, us)| *e as f64 - mean(us, &|u| u as f64)).sum();
    if time.abs() > p.params.delta * n + slack {
        return false;
    }
    if balance {
        for &c in kept {
            let v = |t: i64| p.covariates.raw[c][t as usize - 1] / p.covariates.scale[c];
            let s: f64 = chosen.iter().map(|(e, us)| v(*e) - mean(us, &v)).sum();
            if s.abs() > p.params.delta_prime * n + slack {
                return false;
            }
        }
    }
    true
}
