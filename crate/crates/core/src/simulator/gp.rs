use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Covariance of the smooth-trend Gaussian process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `exp(−Δ²) / (2·100²)`: nearly independent draws with variance 5e-5.
    Printed,
    /// `exp(−Δ² / (2·100²))`: unit variance, smooth trajectories.
    Intended,
}

impl Kernel {
    pub fn covariance(self, dt: f64) -> f64 {
        match self {
            Kernel::Printed => (-dt * dt).exp() / (2.0 * 100.0 * 100.0),
            Kernel::Intended => (-dt * dt / (2.0 * 100.0 * 100.0)).exp(),
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "printed" => Ok(Kernel::Printed),
            "intended" => Ok(Kernel::Intended),
            other => Err(format!("unknown kernel {other:?} (printed|intended)")),
        }
    }
}

/// Lower Cholesky factor, row-major, with the jitter that was needed.
pub struct Factor {
    pub n: usize,
    pub lower: Vec<f64>,
    pub jitter: f64,
}

type Cache = Mutex<HashMap<(Kernel, usize), Arc<Factor>>>;

fn cache() -> &'static Cache {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Cholesky factor of the kernel on the grid `1..=n`, computed once per
/// `(kernel, n)`. Diagonal jitter grows tenfold until the factorization
/// succeeds.
pub fn factor(kernel: Kernel, n: usize) -> Arc<Factor> {
    if let Some(f) = cache().lock().unwrap().get(&(kernel, n)) {
        return f.clone();
    }
    let scale = kernel.covariance(0.0);
    let base = DMatrix::from_fn(n, n, |a, b| kernel.covariance(a as f64 - b as f64));
    let mut jitter = 0.0;
    let chol = loop {
        let mut m = base.clone();
        for k in 0..n {
            m[(k, k)] += jitter;
        }
        if let Some(c) = Cholesky::new(m) {
            break c;
        }
        jitter = if jitter == 0.0 { 1e-12 * scale } else { jitter * 10.0 };
    };
    let l = chol.l();
    let mut lower = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..=a {
            lower[a * n + b] = l[(a, b)];
        }
    }
    let f = Arc::new(Factor { n, lower, jitter });
    cache().lock().unwrap().insert((kernel, n), f.clone());
    f
}

/// One draw of `N(mean, Σ)` on the grid `1..=n`.
pub fn sample<R: Rng>(factor: &Factor, mean: impl Fn(usize) -> f64, rng: &mut R) -> Vec<f64> {
    let n = factor.n;
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    (0..n)
        .map(|a| {
            let row = &factor.lower[a * n..a * n + a + 1];
            mean(a + 1) + row.iter().zip(&z).map(|(l, z)| l * z).sum::<f64>()
        })
        .collect()
}

/// The trend `f(t) = 3t/400`.
pub fn trend(t: usize) -> f64 {
    3.0 * t as f64 / 400.0
}
