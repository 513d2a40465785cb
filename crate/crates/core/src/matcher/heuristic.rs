//! Repair-based local search.
//!
//! Starts from a maximum structural matching that ignores the aggregate
//! constraints, repairs it by reassignments and single ejection chains,
//! drops matches only when stalled, then grows the set again by insertions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bound::max_matching;
use super::{violation, Assignment, MatchingProblem, Method};

const TINY: f64 = 1e-12;
/// Sweeps allowed when repairing after a tentative insertion.
const INSERT_REPAIR_SWEEPS: usize = 25;
const POLISH_SWEEPS: usize = 3;
/// Matches considered for removal in a swap.
const SWAP_OUT: usize = 5;

#[derive(Clone)]
struct Snapshot {
    choice: Vec<Option<usize>>,
    owner: Vec<Option<usize>>,
    sums: Vec<f64>,
    count: usize,
}

#[derive(Debug, Clone, Copy)]
struct Move {
    e: usize,
    c: usize,
    /// Displaced period and its replacement candidate.
    eject: Option<(usize, usize)>,
    v: f64,
    count: usize,
}

struct State<'a> {
    p: &'a MatchingProblem,
    choice: Vec<Option<usize>>,
    owner: Vec<Option<usize>>,
    sums: Vec<f64>,
    count: usize,
    scratch: Vec<f64>,
    order: Vec<usize>,
    rng: ChaCha8Rng,
    work: u64,
    budget: u64,
}

pub(crate) fn search(problem: &MatchingProblem, seed: u64, budget: u64) -> Assignment {
    let mut s = State::new(problem, seed, budget);
    s.initial();
    s.repair(true, usize::MAX);
    s.grow();
    s.polish();
    debug_assert_eq!(s.v(), 0.0);
    Assignment { choice: s.choice }
}

impl<'a> State<'a> {
    fn new(p: &'a MatchingProblem, seed: u64, budget: u64) -> Self {
        let dims = p.dims();
        Self {
            p,
            choice: vec![None; p.exposed.len()],
            owner: vec![None; p.unexposed.len()],
            sums: vec![0.0; dims],
            count: 0,
            scratch: vec![0.0; dims],
            order: (0..p.exposed.len()).collect(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            work: 0,
            budget,
        }
    }

    fn v(&self) -> f64 {
        violation(&self.sums, self.count, &self.p.tol, &self.p.weight)
    }

    fn exhausted(&self) -> bool {
        self.work >= self.budget
    }

    fn set(&mut self, e: usize, new: Option<usize>) {
        if let Some(old) = self.choice[e].take() {
            for &u in self.p.candidates[old].units() {
                self.owner[u] = None;
            }
            for (s, v) in self.sums.iter_mut().zip(self.p.contrib_of(old)) {
                *s -= v;
            }
            self.count -= 1;
        }
        if let Some(c) = new {
            for &u in self.p.candidates[c].units() {
                debug_assert!(self.owner[u].is_none());
                self.owner[u] = Some(e);
            }
            for (s, v) in self.sums.iter_mut().zip(self.p.contrib_of(c)) {
                *s += v;
            }
            self.count += 1;
            self.choice[e] = Some(c);
        }
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            choice: self.choice.clone(),
            owner: self.owner.clone(),
            sums: self.sums.clone(),
            count: self.count,
        }
    }

    fn restore(&mut self, s: Snapshot) {
        self.choice = s.choice;
        self.owner = s.owner;
        self.sums = s.sums;
        self.count = s.count;
    }

    fn initial(&mut self) {
        let p = self.p;
        if p.method == Method::OneToTwo {
            for e in 0..p.exposed.len() {
                let free = p.by_exposed[e]
                    .iter()
                    .copied()
                    .find(|&c| p.candidates[c].units().iter().all(|&u| self.owner[u].is_none()));
                if free.is_some() {
                    self.set(e, free);
                }
            }
            return;
        }
        let adj: Vec<Vec<usize>> = p
            .by_exposed
            .iter()
            .map(|cands| {
                cands
                    .iter()
                    .filter(|&&c| p.candidates[c].arity == 1)
                    .map(|&c| p.candidates[c].unexposed[0])
                    .collect()
            })
            .collect();
        let matching = max_matching(&adj, p.unexposed.len());
        for (e, u) in matching.into_iter().enumerate() {
            if let Some(u) = u {
                let c = p.by_exposed[e]
                    .iter()
                    .copied()
                    .find(|&c| p.candidates[c].arity == 1 && p.candidates[c].unexposed[0] == u);
                self.set(e, c);
            }
        }
    }

    /// Violation after removing `out` and adding `add` candidates.
    fn eval(&mut self, out: [Option<usize>; 2], add: [Option<usize>; 2], count: usize) -> f64 {
        self.scratch.copy_from_slice(&self.sums);
        for c in out.into_iter().flatten() {
            for (s, v) in self.scratch.iter_mut().zip(self.p.contrib_of(c)) {
                *s -= v;
            }
        }
        for c in add.into_iter().flatten() {
            for (s, v) in self.scratch.iter_mut().zip(self.p.contrib_of(c)) {
                *s += v;
            }
        }
        self.work += 1;
        violation(&self.scratch, count, &self.p.tol, &self.p.weight)
    }

    fn improves(&self, v0: f64, m: &Move) -> bool {
        m.v < v0 - TINY || (m.v <= v0 + TINY && m.count > self.count)
    }

    fn preferred(a: &Move, b: &Move) -> bool {
        a.v < b.v - TINY || (a.v <= b.v + TINY && a.count > b.count)
    }

    /// Best improving move that gives period `e` a new candidate.
    fn best_move(&mut self, e: usize, v0: f64) -> Option<Move> {
        let p = self.p;
        let cur = self.choice[e];
        let gained = self.count + usize::from(cur.is_none());
        let mut best: Option<Move> = None;
        let consider = |s: &Self, m: Move, best: &mut Option<Move>| {
            if s.improves(v0, &m) && best.as_ref().is_none_or(|b| Self::preferred(&m, b)) {
                *best = Some(m);
            }
        };
        for &c in &p.by_exposed[e] {
            if Some(c) == cur {
                continue;
            }
            if p.candidates[c]
                .units()
                .iter()
                .all(|&u| self.owner[u].is_none() || self.owner[u] == Some(e))
            {
                let v = self.eval([cur, None], [Some(c), None], gained);
                consider(
                    self,
                    Move {
                        e,
                        c,
                        eject: None,
                        v,
                        count: gained,
                    },
                    &mut best,
                );
            }
        }
        if best.is_some() {
            return best;
        }
        for &c in &p.by_exposed[e] {
            if Some(c) == cur {
                continue;
            }
            let units = p.candidates[c].units();
            let mut other = None;
            let mut ok = true;
            for &u in units {
                match self.owner[u] {
                    None => {}
                    Some(o) if o == e => {}
                    Some(o) => match other {
                        None => other = Some(o),
                        Some(prev) if prev == o => {}
                        Some(_) => ok = false,
                    },
                }
            }
            let Some(e2) = other.filter(|_| ok) else {
                continue;
            };
            let old2 = self.choice[e2];
            for &c2 in &p.by_exposed[e2] {
                if Some(c2) == old2 {
                    continue;
                }
                let fits = p.candidates[c2]
                    .units()
                    .iter()
                    .all(|u| !units.contains(u) && self.owner[*u].is_none_or(|o| o == e || o == e2));
                if !fits {
                    continue;
                }
                let v = self.eval([cur, old2], [Some(c), Some(c2)], gained);
                consider(
                    self,
                    Move {
                        e,
                        c,
                        eject: Some((e2, c2)),
                        v,
                        count: gained,
                    },
                    &mut best,
                );
            }
        }
        best
    }

    fn apply(&mut self, m: Move) {
        if let Some((e2, _)) = m.eject {
            self.set(e2, None);
        }
        self.set(m.e, Some(m.c));
        if let Some((e2, c2)) = m.eject {
            self.set(e2, Some(c2));
        }
    }

    /// One pass of improving moves over all periods; returns whether any
    /// move was applied.
    fn sweep(&mut self) -> bool {
        let mut order = std::mem::take(&mut self.order);
        order.shuffle(&mut self.rng);
        let mut any = false;
        for &e in &order {
            let v0 = self.v();
            if v0 == 0.0 && self.choice[e].is_some() {
                continue;
            }
            if let Some(m) = self.best_move(e, v0) {
                self.apply(m);
                any = true;
            }
        }
        self.order = order;
        any
    }

    fn drop_one(&mut self) {
        let mut best: Option<(usize, f64, f64)> = None;
        for e in 0..self.choice.len() {
            let Some(c) = self.choice[e] else { continue };
            let v = self.eval([Some(c), None], [None, None], self.count - 1);
            let size: f64 = self
                .p
                .contrib_of(c)
                .iter()
                .zip(&self.p.weight)
                .map(|(x, w)| x.abs() * w)
                .sum();
            let better = match best {
                None => true,
                Some((_, bv, bs)) => v < bv - TINY || (v <= bv + TINY && size > bs),
            };
            if better {
                best = Some((e, v, size));
            }
        }
        if let Some((e, _, _)) = best {
            self.set(e, None);
        }
    }

    /// Replaces one of the matches whose removal helps most by a match of an
    /// unmatched period, keeping the cardinality. Returns whether a swap
    /// reduced the violation.
    fn swap(&mut self) -> bool {
        let p = self.p;
        let v0 = self.v();
        let mut removal: Vec<(f64, usize)> = Vec::new();
        for e in 0..self.choice.len() {
            if let Some(c) = self.choice[e] {
                let v = self.eval([Some(c), None], [None, None], self.count - 1);
                removal.push((v, e));
            }
        }
        removal.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut best: Option<(usize, usize, usize, f64)> = None;
        for &(_, e) in removal.iter().take(SWAP_OUT) {
            let cur = self.choice[e];
            for e2 in 0..self.choice.len() {
                if self.choice[e2].is_some() {
                    continue;
                }
                for &c in &p.by_exposed[e2] {
                    let free = p.candidates[c]
                        .units()
                        .iter()
                        .all(|&u| self.owner[u].is_none() || self.owner[u] == Some(e));
                    if !free {
                        continue;
                    }
                    let v = self.eval([cur, None], [Some(c), None], self.count);
                    if v < v0 - TINY && best.is_none_or(|b| v < b.3) {
                        best = Some((e, e2, c, v));
                    }
                }
            }
        }
        match best {
            Some((e, e2, c, _)) => {
                self.set(e, None);
                self.set(e2, Some(c));
                true
            }
            None => false,
        }
    }

    /// Applies improving moves until feasible. With `allow_drop`, stalls are
    /// resolved by dropping a match; otherwise the loop gives up.
    fn repair(&mut self, allow_drop: bool, max_sweeps: usize) -> bool {
        let mut sweeps = 0;
        while self.v() > 0.0 {
            if self.exhausted() || sweeps >= max_sweeps {
                if !allow_drop {
                    return false;
                }
                while self.v() > 0.0 {
                    self.drop_one();
                }
                return true;
            }
            sweeps += 1;
            if !self.sweep() && !self.swap() {
                if !allow_drop {
                    return false;
                }
                self.drop_one();
            }
        }
        true
    }

    fn grow(&mut self) {
        loop {
            if self.exhausted() {
                return;
            }
            let mut progress = false;
            let mut order = self.order.clone();
            order.shuffle(&mut self.rng);
            for &e in &order {
                if self.choice[e].is_none() {
                    if let Some(m) = self.best_move(e, 0.0) {
                        if m.v == 0.0 {
                            self.apply(m);
                            progress = true;
                        }
                    }
                }
            }
            if progress {
                continue;
            }
            for &e in &order {
                if self.choice[e].is_some() || self.exhausted() {
                    continue;
                }
                let target = self.count + 1;
                let snap = self.snapshot();
                if !self.insert_cheapest(e) {
                    continue;
                }
                if self.repair(false, INSERT_REPAIR_SWEEPS) && self.count >= target {
                    progress = true;
                    break;
                }
                self.restore(snap);
            }
            if !progress {
                return;
            }
        }
    }

    fn insert_cheapest(&mut self, e: usize) -> bool {
        let p = self.p;
        let mut best: Option<(usize, f64)> = None;
        for &c in &p.by_exposed[e] {
            if p.candidates[c].units().iter().any(|&u| self.owner[u].is_some()) {
                continue;
            }
            let v = self.eval([None, None], [Some(c), None], self.count + 1);
            if best.is_none_or(|(_, bv)| v < bv - TINY) {
                best = Some((c, v));
            }
        }
        match best {
            Some((c, _)) => {
                self.set(e, Some(c));
                true
            }
            None => false,
        }
    }

    /// Reassignments that keep feasibility and reduce the time gap.
    fn polish(&mut self) {
        let p = self.p;
        for _ in 0..POLISH_SWEEPS {
            let mut any = false;
            for e in 0..p.exposed.len() {
                let Some(cur) = self.choice[e] else { continue };
                let mut best = (cur, p.candidates[cur].gap);
                for &c in &p.by_exposed[e] {
                    let gap = p.candidates[c].gap;
                    if c == cur || gap >= best.1 - TINY {
                        continue;
                    }
                    let free = p.candidates[c]
                        .units()
                        .iter()
                        .all(|&u| self.owner[u].is_none() || self.owner[u] == Some(e));
                    if free && self.eval([Some(cur), None], [Some(c), None], self.count) == 0.0 {
                        best = (c, gap);
                    }
                }
                if best.0 != cur {
                    self.set(e, Some(best.0));
                    any = true;
                }
            }
            if !any {
                return;
            }
        }
    }
}
