//! Standard normal CDF and quantile.

use statrs::distribution::{ContinuousCDF, Normal};

fn standard() -> Normal {
    Normal::standard()
}

/// `Φ(x)`
pub fn cdf(x: f64) -> f64 {
    standard().cdf(x)
}

/// `1 − Φ(x)`, accurate in the upper tail.
pub fn sf(x: f64) -> f64 {
    standard().sf(x)
}

/// `Φ⁻¹(p)` for `p ∈ (0, 1)`.
pub fn quantile(p: f64) -> f64 {
    standard().inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn familiar_quantiles() {
        assert!((quantile(0.975) - 1.959963984540054).abs() < 1e-8);
        assert!((quantile(0.95) - 1.6448536269514722).abs() < 1e-8);
        assert!(quantile(0.5).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for i in 1..200 {
            let p = i as f64 / 200.0;
            assert!((cdf(quantile(p)) - p).abs() < 1e-10);
        }
        assert!((sf(1.96) + cdf(1.96) - 1.0).abs() < 1e-15);
    }
}
