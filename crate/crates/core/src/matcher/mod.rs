//! Constrained matching of exposed to unexposed time periods for one outcome
//! unit.
//!
//! Three programs are supported, all maximizing the number of matched exposed
//! periods under hard balance constraints:
//!
//! * `1-1`: each exposed period is paired with one unexposed period.
//! * `1-2`: each exposed period is matched to one unexposed period before and
//!   one after it.
//! * `1-1/2`: either of the above per exposed period.
//!
//! Every time period is used at most once. Aggregate constraints cap the mean
//! time imbalance by `δ` and the mean imbalance of every kept (scaled) balance
//! column by `δ′`; per-match constraints cap the time gap by `ε` and,
//! optionally, the per-match covariate gap by `δ″`.
//!
//! [`solve`] combines a repair-based local search with a depth-first
//! branch-and-bound that is exact on small instances. The returned
//! [`MatchSet`] is always feasible; its [`Optimality`] flag says whether the
//! cardinality is provably maximal.

mod bound;
mod exact;
mod heuristic;
mod problem;
mod verify;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use problem::{auxiliary_columns, build_problem, expand_auxiliary, MatchingProblem};
pub use verify::{verify_feasibility, BalanceReport, ConstraintSlack, CovariateImbalance, Violation};

/// Slack added to aggregate constraints inside the solver.
pub(crate) const SOLVER_SLACK: f64 = 5e-10;
/// Slack used by the verifier; looser than the solver's.
pub(crate) const VERIFY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "1-1")]
    OneToOne,
    #[serde(rename = "1-2")]
    OneToTwo,
    #[serde(rename = "1-12")]
    OneToOneOrTwo,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::OneToOne, Method::OneToOneOrTwo, Method::OneToTwo];

    /// Letter of the program's constraint family (`A`, `B`, `C`).
    pub fn letter(self) -> char {
        match self {
            Method::OneToOne => 'A',
            Method::OneToTwo => 'B',
            Method::OneToOneOrTwo => 'C',
        }
    }

    pub fn allows_pairs(self) -> bool {
        matches!(self, Method::OneToOne | Method::OneToOneOrTwo)
    }

    pub fn allows_triples(self) -> bool {
        matches!(self, Method::OneToTwo | Method::OneToOneOrTwo)
    }

    /// Short name usable in file names and CLI flags.
    pub fn slug(self) -> &'static str {
        match self {
            Method::OneToOne => "1-1",
            Method::OneToTwo => "1-2",
            Method::OneToOneOrTwo => "1-12",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::OneToOne => "1-1",
            Method::OneToTwo => "1-2",
            Method::OneToOneOrTwo => "1-1/2",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1-1" => Ok(Method::OneToOne),
            "1-2" => Ok(Method::OneToTwo),
            "1-12" | "1-1/2" => Ok(Method::OneToOneOrTwo),
            other => Err(Error::InvalidParameter(format!("unknown method {other:?}"))),
        }
    }
}

/// Balance tuning parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningParams {
    /// Cap on the mean time imbalance.
    pub delta: f64,
    /// Cap on the mean imbalance of each kept balance column. `f64::INFINITY`
    /// disables covariate balance.
    #[serde(with = "infinite_as_null")]
    pub delta_prime: f64,
    /// Per-match cap on `|t_e − t_u|` (inclusive).
    pub eps: u32,
    /// Optional per-match cap on covariate gaps.
    pub delta_dprime: Option<f64>,
    /// Interval length of localized auxiliary columns.
    pub ell: Option<f64>,
    /// Polynomial order `K` of auxiliary columns.
    pub kpow: Option<u32>,
    /// `false` keeps only the time constraints (unadjusted matching).
    pub adjust: bool,
}

impl Default for TuningParams {
    fn default() -> Self {
        Self {
            delta: 2.0,
            delta_prime: 0.05,
            eps: 6,
            delta_dprime: None,
            ell: None,
            kpow: None,
            adjust: true,
        }
    }
}

impl TuningParams {
    pub fn new(delta: f64, delta_prime: f64, eps: u32) -> Self {
        Self {
            delta,
            delta_prime,
            eps,
            ..Self::default()
        }
    }

    pub fn unadjusted(mut self) -> Self {
        self.adjust = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return bad("delta must be a finite nonnegative number");
        }
        if !(self.delta_prime >= 0.0) {
            return bad("delta' must be nonnegative");
        }
        if let Some(d) = self.delta_dprime {
            if !(d >= 0.0) {
                return bad("delta'' must be nonnegative");
            }
        }
        match (self.ell, self.kpow) {
            (None, None) => {}
            (Some(ell), Some(k)) => {
                if !(ell > 0.0) || !ell.is_finite() {
                    return bad("ell must be positive");
                }
                if k < 2 {
                    return bad("K must be at least 2");
                }
            }
            _ => return bad("ell and K must be given together"),
        }
        Ok(())
    }

    /// Whether covariate columns enter the aggregate constraints.
    pub fn balances_covariates(&self) -> bool {
        self.adjust && self.delta_prime.is_finite()
    }
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimality {
    /// Cardinality is provably maximal.
    Proven,
    /// Feasible, cardinality not certified.
    Heuristic,
}

/// Solver output. Time labels are one-based period indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub method: Method,
    /// `(t_e, t_u)`
    pub pairs: Vec<(i64, i64)>,
    /// `(t_e, t_u1, t_u2)` with `t_u1 < t_e < t_u2`.
    pub triples: Vec<(i64, i64, i64)>,
    pub optimality: Optimality,
    /// Upper bound on the achievable number of matches.
    pub upper_bound: usize,
    /// `|𝒯_e|` of the problem the set was solved for.
    pub n_exposed: usize,
    pub balance: BalanceReport,
}

impl MatchSet {
    pub fn empty(method: Method, n_exposed: usize) -> Self {
        Self {
            method,
            pairs: Vec::new(),
            triples: Vec::new(),
            optimality: Optimality::Proven,
            upper_bound: 0,
            n_exposed,
            balance: BalanceReport::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len() + self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Matched exposed periods in increasing order.
    pub fn matched_exposed(&self) -> Vec<i64> {
        let mut out: Vec<i64> = self
            .pairs
            .iter()
            .map(|p| p.0)
            .chain(self.triples.iter().map(|t| t.0))
            .collect();
        out.sort_unstable();
        out
    }

    /// `Σ |t_e − mean(t_u)|` over matches.
    pub fn total_time_gap(&self) -> f64 {
        self.pairs.iter().map(|&(e, u)| (e - u).abs() as f64).sum::<f64>()
            + self
                .triples
                .iter()
                .map(|&(e, a, b)| (e as f64 - (a + b) as f64 / 2.0).abs())
                .sum::<f64>()
    }

    pub fn matched_proportion(&self) -> f64 {
        if self.n_exposed == 0 {
            0.0
        } else {
            self.len() as f64 / self.n_exposed as f64
        }
    }
}

/// Which search strategy to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Local search first, branch-and-bound when the candidate set is small.
    Auto,
    /// Branch-and-bound only (falls back to local search on budget exhaustion).
    Exact,
    /// Local search only.
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub backend: Backend,
    /// Branch-and-bound is attempted when the candidate count is at most this.
    pub exact_candidate_limit: usize,
    /// Node budget of the branch-and-bound search.
    pub node_budget: u64,
    /// Budget of the local search, in evaluated moves.
    pub search_budget: u64,
    /// Seed of the local search move order.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            backend: Backend::Auto,
            exact_candidate_limit: 5_000,
            node_budget: 200_000,
            search_budget: 2_000_000,
            seed: 0,
        }
    }
}

/// Exposed-count limit under which `Auto` always runs the full search so the
/// tie-breaking rule is applied exactly.
const SMALL_INSTANCE: usize = 12;

/// A chosen candidate per exposed period.
#[derive(Debug, Clone)]
pub(crate) struct Assignment {
    pub choice: Vec<Option<usize>>,
}

impl Assignment {
    pub fn count(&self) -> usize {
        self.choice.iter().filter(|c| c.is_some()).count()
    }

    /// Ordering used to pick among feasible solutions: more matches, then a
    /// smaller total time gap, then the lexicographically earliest matches.
    pub fn better_than(&self, other: &Assignment, problem: &MatchingProblem) -> bool {
        let (a, b) = (self.count(), other.count());
        if a != b {
            return a > b;
        }
        let (ga, gb) = (self.gap(problem), other.gap(problem));
        if (ga - gb).abs() > 1e-9 {
            return ga < gb;
        }
        self.lex_key(problem).cmp(&other.lex_key(problem)) == Ordering::Less
    }

    pub fn gap(&self, problem: &MatchingProblem) -> f64 {
        self.choice.iter().flatten().map(|&c| problem.candidates[c].gap).sum()
    }

    fn lex_key(&self, problem: &MatchingProblem) -> Vec<(i64, i64, i64)> {
        let mut key: Vec<(i64, i64, i64)> = self.choice.iter().flatten().map(|&c| problem.match_key(c)).collect();
        key.sort_unstable();
        key
    }
}

/// Solves with default [`SolverOptions`].
pub fn solve(problem: &MatchingProblem) -> MatchSet {
    solve_with(problem, &SolverOptions::default())
}

pub fn solve_with(problem: &MatchingProblem, options: &SolverOptions) -> MatchSet {
    let upper = bound::upper_bound(problem);
    let small = problem.candidates.len() <= options.exact_candidate_limit;

    let (assignment, proven) = match options.backend {
        Backend::Heuristic => {
            let h = multistart(problem, options, upper);
            let proven = h.count() == upper;
            (h, proven)
        }
        Backend::Exact => {
            let outcome = exact::search(problem, None, options.node_budget);
            if outcome.complete {
                (outcome.best, true)
            } else {
                let h = heuristic::search(problem, options.seed, options.search_budget);
                let best = pick(problem, outcome.best, h);
                let proven = best.count() == upper;
                (best, proven)
            }
        }
        Backend::Auto => {
            let h = multistart(problem, options, upper);
            let at_bound = h.count() == upper;
            let run_exact = small && (!at_bound || problem.exposed.len() <= SMALL_INSTANCE);
            if run_exact {
                let outcome = exact::search(problem, Some(&h), options.node_budget);
                let complete = outcome.complete;
                let best = pick(problem, outcome.best, h);
                let proven = complete || best.count() == upper;
                (best, proven)
            } else {
                (h, at_bound)
            }
        }
    };

    let mut set = problem.to_match_set(&assignment, upper);
    set.optimality = if proven {
        Optimality::Proven
    } else {
        Optimality::Heuristic
    };
    set.balance = verify_feasibility(&set, problem);
    debug_assert!(set.balance.violations.is_empty(), "{:?}", set.balance.violations);
    set
}

/// Extra local-search runs when the first one stops short of the bound.
const RESTARTS: u64 = 3;

fn multistart(problem: &MatchingProblem, options: &SolverOptions, upper: usize) -> Assignment {
    let mut best = heuristic::search(problem, options.seed, options.search_budget);
    for k in 1..=RESTARTS {
        if best.count() >= upper {
            break;
        }
        let next = heuristic::search(problem, options.seed.wrapping_add(k), options.search_budget);
        best = pick(problem, best, next);
    }
    best
}

fn pick(problem: &MatchingProblem, a: Assignment, b: Assignment) -> Assignment {
    if b.better_than(&a, problem) {
        b
    } else {
        a
    }
}

/// Sum of weighted aggregate-constraint excess; zero means feasible.
#[inline]
pub(crate) fn violation(sums: &[f64], count: usize, tol: &[f64], weight: &[f64]) -> f64 {
    let n = count as f64;
    let slack = SOLVER_SLACK * (1.0 + n);
    let mut v = 0.0;
    for k in 0..sums.len() {
        let excess = sums[k].abs() - tol[k] * n - slack;
        if excess > 0.0 {
            v += excess * weight[k];
        }
    }
    v
}
