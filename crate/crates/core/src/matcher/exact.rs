use super::{violation, Assignment, MatchingProblem, SMALL_INSTANCE, SOLVER_SLACK};

pub(crate) struct ExactOutcome {
    pub best: Assignment,
    /// `false` when the node budget ran out before the tree was exhausted.
    pub complete: bool,
}

struct Search<'a> {
    p: &'a MatchingProblem,
    dims: usize,
    used: Vec<bool>,
    choice: Vec<Option<usize>>,
    sums: Vec<f64>,
    count: usize,
    /// Suffix sums of the per-period contribution range, `[e][k]`.
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Number of periods from `e` on that have any candidate.
    reachable: Vec<usize>,
    best: Assignment,
    best_count: usize,
    /// Explore ties so the tie-breaking rule is applied exactly.
    ties: bool,
    nodes: u64,
    budget: u64,
    aborted: bool,
}

/// Depth-first branch-and-bound over exposed periods in time order.
pub(crate) fn search(problem: &MatchingProblem, incumbent: Option<&Assignment>, budget: u64) -> ExactOutcome {
    let n_e = problem.exposed.len();
    let dims = problem.dims();
    let mut lo = vec![0.0; (n_e + 1) * dims];
    let mut hi = vec![0.0; (n_e + 1) * dims];
    let mut reachable = vec![0; n_e + 1];
    for e in (0..n_e).rev() {
        let cands = &problem.by_exposed[e];
        reachable[e] = reachable[e + 1] + usize::from(!cands.is_empty());
        for k in 0..dims {
            let (mut mn, mut mx) = (0.0f64, 0.0f64);
            for &c in cands {
                let v = problem.contrib_of(c)[k];
                mn = mn.min(v);
                mx = mx.max(v);
            }
            lo[e * dims + k] = lo[(e + 1) * dims + k] + mn;
            hi[e * dims + k] = hi[(e + 1) * dims + k] + mx;
        }
    }
    let best = incumbent.cloned().unwrap_or(Assignment {
        choice: vec![None; n_e],
    });
    let mut s = Search {
        p: problem,
        dims,
        used: vec![false; problem.unexposed.len()],
        choice: vec![None; n_e],
        sums: vec![0.0; dims],
        count: 0,
        lo,
        hi,
        reachable,
        best_count: best.count(),
        best,
        ties: n_e <= SMALL_INSTANCE,
        nodes: 0,
        budget,
        aborted: false,
    };
    s.dfs(0);
    ExactOutcome {
        best: s.best,
        complete: !s.aborted,
    }
}

impl Search<'_> {
    fn dfs(&mut self, e: usize) {
        if self.aborted {
            return;
        }
        self.nodes += 1;
        if self.nodes > self.budget {
            self.aborted = true;
            return;
        }
        let potential = self.count + self.reachable[e];
        if potential < self.best_count || (!self.ties && potential <= self.best_count) {
            return;
        }
        if e == self.p.exposed.len() {
            self.leaf();
            return;
        }
        let n_max = potential as f64;
        let slack = SOLVER_SLACK * (1.0 + n_max);
        for k in 0..self.dims {
            let cap = self.p.tol[k] * n_max + slack;
            if self.sums[k] + self.lo[e * self.dims + k] > cap || self.sums[k] + self.hi[e * self.dims + k] < -cap {
                return;
            }
        }
        let p = self.p;
        for &c in &p.by_exposed[e] {
            let units = p.candidates[c].units();
            if units.iter().any(|&u| self.used[u]) {
                continue;
            }
            for &u in units {
                self.used[u] = true;
            }
            for (s, v) in self.sums.iter_mut().zip(p.contrib_of(c)) {
                *s += v;
            }
            self.count += 1;
            self.choice[e] = Some(c);
            self.dfs(e + 1);
            self.choice[e] = None;
            self.count -= 1;
            for (s, v) in self.sums.iter_mut().zip(p.contrib_of(c)) {
                *s -= v;
            }
            for &u in units {
                self.used[u] = false;
            }
            if self.aborted {
                return;
            }
        }
        self.dfs(e + 1);
    }

    fn leaf(&mut self) {
        if self.count < self.best_count {
            return;
        }
        if violation(&self.sums, self.count, &self.p.tol, &self.p.weight) > 0.0 {
            return;
        }
        let candidate = Assignment {
            choice: self.choice.clone(),
        };
        if self.count > self.best_count || candidate.better_than(&self.best, self.p) {
            self.best_count = self.count;
            self.best = candidate;
        }
    }
}
