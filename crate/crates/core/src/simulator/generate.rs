use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::gp::{self, Kernel};
use super::{Scenario, ScenarioSpec};
use crate::data::{CovariateKind, CovariateTensor, PanelDataset, RawColumns};

/// Neighborhood radius of the bipartite covariates.
pub const NEIGHBOR_RADIUS: f64 = 0.1;

// Independent random streams per model component.
const S_LAYOUT: u64 = 0;
const S_STATIC: u64 = 1;
const S_GP_X: u64 = 2;
const S_GP_W: u64 = 3;
const S_X3: u64 = 4;
const S_W3: u64 = 5;
const S_P: u64 = 6;
const S_Z: u64 = 7;
const S_TREAT: u64 = 8;
const S_NET: u64 = 9;
const S_NOISE: u64 = 10;
const S_HETERO: u64 = 11;
const S_P_REST: u64 = 12;

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Unit coordinates on the unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub interventional: Vec<[f64; 2]>,
    pub outcome: Vec<[f64; 2]>,
}

fn in_ranges(k: usize, ranges: &[(usize, usize)]) -> bool {
    ranges.iter().any(|&(a, b)| (a..=b).contains(&k))
}

fn block<R: Rng>(low: bool, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    if low {
        0.5 * u
    } else {
        0.5 + 0.5 * u
    }
}

/// Stratified uniform locations. Interventional units 1–10 and 31–40 have
/// `x < 0.5`, units 1–10 and 21–30 have `y < 0.5`; outcome units 1–68 and
/// 113–156 have `x < 0.5`, units 1–50 and 101–150 have `y < 0.5`.
pub fn gen_locations<R: Rng>(n: usize, m: usize, rng: &mut R) -> Layout {
    let interventional = (1..=n)
        .map(|k| {
            let x = block(in_ranges(k, &[(1, 10), (31, 40)]), rng);
            let y = block(in_ranges(k, &[(1, 10), (21, 30)]), rng);
            [x, y]
        })
        .collect();
    let outcome = (1..=m)
        .map(|k| {
            let x = block(in_ranges(k, &[(1, 68), (113, 156)]), rng);
            let y = block(in_ranges(k, &[(1, 50), (101, 150)]), rng);
            [x, y]
        })
        .collect();
    Layout {
        interventional,
        outcome,
    }
}

impl Layout {
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.interventional[i], self.outcome[j]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }

    pub fn neighbors(&self) -> Neighbors {
        let (n, m) = (self.interventional.len(), self.outcome.len());
        let mut pairs = Vec::new();
        let mut of_outcome = vec![Vec::new(); m];
        let mut of_interventional = vec![Vec::new(); n];
        for j in 0..m {
            for i in 0..n {
                if self.dist(i, j) <= NEIGHBOR_RADIUS {
                    of_outcome[j].push(pairs.len());
                    of_interventional[i].push(pairs.len());
                    pairs.push((i, j));
                }
            }
        }
        Neighbors {
            pairs,
            of_outcome,
            of_interventional,
        }
    }
}

fn in_lower_left(p: [f64; 2]) -> bool {
    p[0] <= 0.5 && p[1] <= 0.5
}

/// The neighbor matrix `R` as a list of `(i, j)` pairs within the radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbors {
    pub pairs: Vec<(usize, usize)>,
    /// Pair ids incident to each outcome unit.
    pub of_outcome: Vec<Vec<usize>>,
    /// Pair ids incident to each interventional unit.
    pub of_interventional: Vec<Vec<usize>>,
}

impl Neighbors {
    /// `q_ij` for a pair incident to outcome unit `j`.
    pub fn q(&self, j: usize) -> f64 {
        1.0 / self.of_outcome[j].len() as f64
    }
}

/// Mean of `values[pair]` over `ids`; 0 for an empty neighborhood.
fn neighborhood_mean(ids: &[usize], value: impl Fn(usize) -> f64) -> f64 {
    if ids.is_empty() {
        0.0
    } else {
        ids.iter().map(|&p| value(p)).sum::<f64>() / ids.len() as f64
    }
}

/// Generated covariates. Time-varying arrays are `[t][unit]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub x3: Vec<f64>,
    pub x4: Vec<f64>,
    pub x5: Vec<f64>,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub w3: Vec<f64>,
    pub w4: Vec<f64>,
    pub w5: Vec<f64>,
    /// Shared `X6 = W6`.
    pub z: Vec<f64>,
    /// Network covariate at neighbor pairs, `[t][pair]`.
    pub p_pairs: Vec<f64>,
    /// `Σ_i q_ij P_tij`, `[t][j]`.
    pub p_tilde: Vec<f64>,
    /// `Σ_j r_ij P_tij / Σ_j r_ij`, `[t][i]`.
    pub p_bar: Vec<f64>,
}

fn gp_block(kernel: Kernel, periods: usize, units: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let f = gp::factor(kernel, periods);
    let draws: Vec<Vec<f64>> = (0..units).map(|_| gp::sample(&f, gp::trend, rng)).collect();
    let mut out = vec![0.0; periods * units];
    for (u, d) in draws.iter().enumerate() {
        for t in 0..periods {
            out[t * units + u] = d[t];
        }
    }
    out
}

fn location_static(points: &[[f64; 2]], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let high = Beta::new(9.0, 1.0).unwrap();
    let low = Beta::new(1.0, 9.0).unwrap();
    points
        .iter()
        .map(|&p| {
            8.0 * if in_lower_left(p) {
                high.sample(rng)
            } else {
                low.sample(rng)
            }
        })
        .collect()
}

/// Draws every covariate of a synthetic panel.
pub fn gen_covariates(spec: &ScenarioSpec, seed: u64, layout: &Layout, nb: &Neighbors) -> Covariates {
    let (n, m, periods) = (spec.n, spec.m, spec.periods);
    let mut rng = stream(seed, S_STATIC);
    let x2 = location_static(&layout.interventional, &mut rng);
    let w2 = location_static(&layout.outcome, &mut rng);

    let x1 = gp_block(spec.kernel, periods, n, &mut stream(seed, S_GP_X));
    let w1 = gp_block(spec.kernel, periods, m, &mut stream(seed, S_GP_W));

    let mut rng = stream(seed, S_X3);
    let mut x3 = vec![0.0; periods * n];
    for t in 0..periods {
        let sd = ((t + 1) as f64 / 100.0).sqrt();
        for v in &mut x3[t * n..(t + 1) * n] {
            *v = sd * rng.sample::<f64, _>(StandardNormal);
        }
    }

    let mut rng = stream(seed, S_W3);
    let mut w3 = vec![0.0; periods * m];
    for t in 0..periods {
        let beta = Beta::new((t + 1) as f64 / 100.0, 2.0).unwrap();
        for v in &mut w3[t * m..(t + 1) * m] {
            *v = 2.0 * beta.sample(&mut rng);
        }
    }

    let mut rng = stream(seed, S_P);
    let np = nb.pairs.len();
    let mut p_pairs = vec![0.0; periods * np];
    for t in 0..periods {
        let beta = Beta::new((t + 1) as f64 / 50.0, 10.0).unwrap();
        for v in &mut p_pairs[t * np..(t + 1) * np] {
            *v = beta.sample(&mut rng);
        }
    }

    let mut rng = stream(seed, S_Z);
    let z = (1..=periods)
        .map(|t| {
            let var = (t.max(2) as f64).ln() / 10.0;
            Normal::new(t as f64 / 200.0, var.sqrt()).unwrap().sample(&mut rng)
        })
        .collect();

    // r-weighted averages over outcome neighbors of interventional units
    let x4 = (0..n)
        .map(|i| neighborhood_mean(&nb.of_interventional[i], |p| w2[nb.pairs[p].1]))
        .collect();
    let mut x5 = vec![0.0; periods * n];
    let mut p_bar = vec![0.0; periods * n];
    for t in 0..periods {
        for i in 0..n {
            let ids = &nb.of_interventional[i];
            x5[t * n + i] = neighborhood_mean(ids, |p| w3[t * m + nb.pairs[p].1]);
            p_bar[t * n + i] = neighborhood_mean(ids, |p| p_pairs[t * np + p]);
        }
    }
    // q-weighted averages over interventional neighbors of outcome units
    let w4 = (0..m)
        .map(|j| neighborhood_mean(&nb.of_outcome[j], |p| x2[nb.pairs[p].0]))
        .collect();
    let mut w5 = vec![0.0; periods * m];
    let mut p_tilde = vec![0.0; periods * m];
    for t in 0..periods {
        for j in 0..m {
            let ids = &nb.of_outcome[j];
            w5[t * m + j] = neighborhood_mean(ids, |p| x3[t * n + nb.pairs[p].0]);
            p_tilde[t * m + j] = neighborhood_mean(ids, |p| p_pairs[t * np + p]);
        }
    }

    Covariates {
        x1,
        x2,
        x3,
        x4,
        x5,
        w1,
        w2,
        w3,
        w4,
        w5,
        z,
        p_pairs,
        p_tilde,
        p_bar,
    }
}

fn logistic_inv(v: f64) -> f64 {
    1.0 / (1.0 + v.exp())
}

/// `P(A_ti = 1)` for time index `t` (zero-based) and interventional unit `i`.
fn treatment_prob(scenario: Scenario, cov: &Covariates, n: usize, t: usize, i: usize) -> f64 {
    let k = t * n + i;
    match scenario {
        Scenario::A => 0.5,
        Scenario::B => logistic_inv(cov.x1[k] / 1.2),
        Scenario::C => 1.0 / (1.0 + 0.3 * (cov.x2[i] - cov.x4[i] / 40.0).exp()),
        Scenario::D => logistic_inv(cov.x3[k] / 2.0 + cov.x5[k] / 2.0 + cov.z[t] + cov.p_bar[k] / 10.0),
        Scenario::E => {
            let s = cov.x1[k] / 20.0
                + cov.x2[i]
                + cov.x3[k] / 100.0
                + cov.x4[i]
                + cov.x5[k] / 20.0
                + cov.z[t] / 1.5
                + cov.p_bar[k] / 10.0;
            1.0 / (1.0 + 0.45 * s.exp())
        }
    }
}

/// Edge probabilities `ρ_tij`.
struct EdgeModel {
    /// `exp(dist(i, j))`, `[i][j]`
    exp_dist: Vec<f64>,
    kind: EdgeKind,
}

enum EdgeKind {
    Constant(f64),
    Scaled(f64),
    TimeVarying,
}

impl EdgeModel {
    fn new(spec: &ScenarioSpec, layout: &Layout) -> Self {
        let (n, m) = (spec.n, spec.m);
        let mut exp_dist = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                exp_dist[i * m + j] = layout.dist(i, j).exp();
            }
        }
        let kind = match spec.scenario {
            Scenario::A if spec.variants.network_confounding => EdgeKind::Scaled(1.7),
            Scenario::A => EdgeKind::Constant(0.17),
            Scenario::B => EdgeKind::Scaled(2.0),
            Scenario::C => EdgeKind::Scaled(1.7),
            Scenario::D | Scenario::E => EdgeKind::TimeVarying,
        };
        Self { exp_dist, kind }
    }

    /// Fills `row` with `ρ_tij` for all `(i, j)` at time label `t`.
    fn probs(&self, t: usize, row: &mut [f64]) {
        match self.kind {
            EdgeKind::Constant(r) => row.fill(r),
            EdgeKind::Scaled(c) => {
                for (r, e) in row.iter_mut().zip(&self.exp_dist) {
                    *r = 1.0 / (c * (1.0 + e));
                }
            }
            EdgeKind::TimeVarying => {
                let base = 1.0 + 0.1 * (PI * t as f64 / 1000.0).sin().exp();
                for (r, e) in row.iter_mut().zip(&self.exp_dist) {
                    *r = 1.0 / (base + e);
                }
            }
        }
    }
}

/// One generated panel plus the quantities the studies need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimData {
    pub spec: ScenarioSpec,
    /// Seed of this replication.
    pub seed: u64,
    pub threshold: u32,
    pub layout: Layout,
    pub neighbors: Neighbors,
    pub covariates: Covariates,
    /// `[t][i]`
    pub treatments: Vec<u8>,
    /// `[t][i][j]`, kept only when requested.
    pub network: Option<Vec<u8>>,
    /// `Σ_i A_ti G_tij`, `[t][j]`
    pub counts: Vec<u16>,
    /// `[t][j]`
    pub exposure: Vec<bool>,
    /// `[t][j]`
    pub outcomes: Vec<f64>,
    /// Individual effects `Y(1) − Y(0)`, `[t][j]`.
    pub effects: Vec<f64>,
}

/// Generates one replication. `keep_network` retains the full edge array.
pub fn generate(spec: &ScenarioSpec, seed: u64, keep_network: bool) -> SimData {
    let (n, m, periods) = (spec.n, spec.m, spec.periods);
    let layout = gen_locations(n, m, &mut stream(spec.layout_seed.unwrap_or(seed), S_LAYOUT));
    let nb = layout.neighbors();
    let cov = gen_covariates(spec, seed, &layout, &nb);

    let mut rng = stream(seed, S_TREAT);
    let mut treatments = vec![0u8; periods * n];
    for t in 0..periods {
        for i in 0..n {
            let p = treatment_prob(spec.scenario, &cov, n, t, i);
            treatments[t * n + i] = u8::from(rng.random::<f64>() < p);
        }
    }

    let edges = EdgeModel::new(spec, &layout);
    let mut rng = stream(seed, S_NET);
    let mut counts = vec![0u16; periods * m];
    let mut network = keep_network.then(|| vec![0u8; periods * n * m]);
    let mut rho = vec![0.0; n * m];
    for t in 0..periods {
        edges.probs(t + 1, &mut rho);
        let row = &mut counts[t * m..(t + 1) * m];
        for i in 0..n {
            let treated = treatments[t * n + i] == 1;
            let probs = &rho[i * m..(i + 1) * m];
            for (j, &r) in probs.iter().enumerate() {
                let g = rng.random::<f64>() < r;
                if let Some(net) = network.as_mut() {
                    net[(t * n + i) * m + j] = u8::from(g);
                }
                if g && treated {
                    row[j] += 1;
                }
            }
        }
    }
    let threshold = spec.threshold();
    let exposure: Vec<bool> = counts.iter().map(|&c| u32::from(c) >= threshold).collect();

    let effects = unit_effects(spec, seed);
    let noise = noise(spec, seed);
    let outcomes = (0..periods * m)
        .map(|k| {
            let (t, j) = (k / m, k % m);
            let e = if exposure[k] { effects[k] } else { 0.0 };
            e + baseline(spec, &cov, t, j) + noise[k]
        })
        .collect();

    SimData {
        spec: spec.clone(),
        seed,
        threshold,
        layout,
        neighbors: nb,
        covariates: cov,
        treatments,
        network,
        counts,
        exposure,
        outcomes,
        effects,
    }
}

fn unit_effects(spec: &ScenarioSpec, seed: u64) -> Vec<f64> {
    let (m, periods) = (spec.m, spec.periods);
    if spec.variants.heterogeneous {
        let mut rng = stream(seed, S_HETERO);
        (0..periods * m)
            .map(|k| {
                let t = (k / m + 1) as f64;
                let e: f64 = rng.sample(StandardNormal);
                1.0 + e + 0.005 * (periods as f64 - t)
            })
            .collect()
    } else {
        vec![if spec.variants.null_effects { 0.0 } else { 1.0 }; periods * m]
    }
}

/// Outcome errors, `[t][j]`: i.i.d. standard normal or a stationary AR(1)
/// per unit.
fn noise(spec: &ScenarioSpec, seed: u64) -> Vec<f64> {
    let (m, periods) = (spec.m, spec.periods);
    let mut rng = stream(seed, S_NOISE);
    let mut out: Vec<f64> = (0..periods * m).map(|_| rng.sample(StandardNormal)).collect();
    if let Some(rho) = spec.variants.ar1_rho {
        let s = (1.0 - rho * rho).sqrt();
        for t in 1..periods {
            for j in 0..m {
                out[t * m + j] = rho * out[(t - 1) * m + j] + s * out[t * m + j];
            }
        }
    }
    out
}

fn baseline(spec: &ScenarioSpec, cov: &Covariates, t: usize, j: usize) -> f64 {
    let k = t * spec.m + j;
    let time_varying = || cov.w3[k] + cov.w5[k] + cov.p_tilde[k] + cov.z[t];
    if spec.variants.heterogeneous {
        return time_varying();
    }
    match spec.scenario {
        Scenario::A => cov.w2[j],
        Scenario::B => cov.w1[k],
        Scenario::C => 4.0 * cov.w2[j] + 4.0 * cov.w4[j],
        Scenario::D => time_varying(),
        Scenario::E => {
            cov.w1[k]
                + 2.0 * cov.w2[j]
                + cov.w3[k]
                + 0.1 * cov.w3[k].powi(2)
                + 2.0 * cov.w4[j]
                + cov.w5[k]
                + 1.0 / (1.0 + cov.w5[k].exp())
                + cov.p_tilde[k].sin()
                + 2.0 * cov.z[t]
        }
    }
}

impl SimData {
    pub fn exposure_series(&self, j: usize) -> Vec<bool> {
        let m = self.spec.m;
        (0..self.spec.periods).map(|t| self.exposure[t * m + j]).collect()
    }

    pub fn outcome_series(&self, j: usize) -> Vec<f64> {
        let m = self.spec.m;
        (0..self.spec.periods).map(|t| self.outcomes[t * m + j]).collect()
    }

    pub fn effect_series(&self, j: usize) -> Vec<f64> {
        let m = self.spec.m;
        (0..self.spec.periods).map(|t| self.effects[t * m + j]).collect()
    }

    /// Balance columns of outcome unit `j`: `W3`, `W5`, `W6` and the
    /// `q`-summary of the network covariate.
    pub fn balance_columns(&self, j: usize) -> RawColumns {
        let (m, periods) = (self.spec.m, self.spec.periods);
        let cov = &self.covariates;
        let col = |v: &[f64]| (0..periods).map(|t| v[t * m + j]).collect::<Vec<f64>>();
        let mut cols = RawColumns::default();
        cols.push("w:W3", CovariateKind::Outcome, col(&cov.w3));
        cols.push("w:W5", CovariateKind::Outcome, col(&cov.w5));
        cols.push("w:W6", CovariateKind::Outcome, cov.z.clone());
        cols.push("p:P", CovariateKind::Network, col(&cov.p_tilde));
        cols
    }

    /// Full panel with `X1..X6`, `W1..W6` and `P`. Network values outside the
    /// neighbor pairs come from their own stream, so the panel agrees with
    /// everything the studies use. Returns `None` when the network was not
    /// kept.
    pub fn to_panel(&self) -> Option<PanelDataset> {
        let network = self.network.as_ref()?;
        let (n, m, periods) = (self.spec.n, self.spec.m, self.spec.periods);
        let cov = &self.covariates;
        let mut data = PanelDataset::new(
            periods,
            n,
            m,
            self.treatments.iter().map(|&a| f64::from(a)).collect(),
            network.iter().map(|&g| f64::from(g)).collect(),
            self.outcomes.clone(),
        );
        let mut x = Vec::with_capacity(periods * n * 6);
        for t in 0..periods {
            for i in 0..n {
                let k = t * n + i;
                x.extend([cov.x1[k], cov.x2[i], cov.x3[k], cov.x4[i], cov.x5[k], cov.z[t]]);
            }
        }
        let mut w = Vec::with_capacity(periods * m * 6);
        for t in 0..periods {
            for j in 0..m {
                let k = t * m + j;
                w.extend([cov.w1[k], cov.w2[j], cov.w3[k], cov.w4[j], cov.w5[k], cov.z[t]]);
            }
        }
        let names = |p: &str| (1..=6).map(|k| format!("{p}{k}")).collect::<Vec<_>>();
        data.x = CovariateTensor::new(names("X"), x);
        data.w = CovariateTensor::new(names("W"), w);

        let mut rng = stream(self.seed, S_P_REST);
        let mut p = vec![0.0; periods * n * m];
        for t in 0..periods {
            let beta = Beta::new((t + 1) as f64 / 50.0, 10.0).unwrap();
            for v in &mut p[t * n * m..(t + 1) * n * m] {
                *v = beta.sample(&mut rng);
            }
        }
        let np = self.neighbors.pairs.len();
        for t in 0..periods {
            for (pid, &(i, j)) in self.neighbors.pairs.iter().enumerate() {
                p[(t * n + i) * m + j] = cov.p_pairs[t * np + pid];
            }
        }
        data.p = CovariateTensor::new(vec!["P".into()], p);
        Some(data)
    }
}
