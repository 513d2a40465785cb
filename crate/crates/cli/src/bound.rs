//! Worst-case bias bounds.

use anyhow::{bail, Context, Result};
use bimatch_core::data::{balance_columns, BalanceCovariateSet};
use bimatch_core::estimator::{
    linear_bias_bound, observed_supports, smooth_bias_bound, smooth_constants, LinearBoundInputs, SmoothBoundInputs,
};
use serde_json::json;

use crate::analysis::load;
use crate::args::BoundKind;
use crate::emit;

fn parse_support(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s
        .split_once(':')
        .with_context(|| format!("support {s:?} is not lo:hi"))?;
    let (a, b): (f64, f64) = (a.trim().parse()?, b.trim().parse()?);
    if !(a <= b) {
        bail!("support {s:?} has lo > hi");
    }
    Ok((a, b))
}

pub fn run_bound(kind: &BoundKind) -> Result<()> {
    let value = match kind {
        BoundKind::Linear {
            beta_time,
            norm_w,
            norm_x,
            norm_p,
            delta,
            delta_prime,
        } => {
            let inputs = LinearBoundInputs {
                beta_time: *beta_time,
                norm_w: *norm_w,
                norm_x: *norm_x,
                norm_p: *norm_p,
            };
            json!({
                "kind": "linear",
                "delta": delta,
                "delta_prime": delta_prime,
                "inputs": inputs,
                "bound": linear_bias_bound(&inputs, *delta, *delta_prime),
            })
        }
        BoundKind::Smooth {
            c,
            k,
            ell,
            horizon,
            support,
            data,
            unit,
            delta,
            delta_prime,
        } => {
            if *k == 0 || !(*ell > 0.0) {
                bail!("k must be at least 1 and ell positive");
            }
            let mut supports = support.iter().map(|s| parse_support(s)).collect::<Result<Vec<_>>>()?;
            let mut periods = *horizon;
            if let Some(dir) = data {
                let input = load(dir)?;
                let j = input.dataset.unit_index(*unit)?;
                if supports.is_empty() {
                    let cols = balance_columns(&input.dataset, j, &input.weights)?;
                    supports = observed_supports(&BalanceCovariateSet::unscaled(cols));
                }
                periods.get_or_insert(input.dataset.periods);
            }
            let horizon = periods.context("pass --horizon or --data")?;
            let inputs = SmoothBoundInputs {
                c: *c,
                k: *k,
                ell: *ell,
                horizon,
                supports,
            };
            json!({
                "kind": "smooth",
                "delta": delta,
                "delta_prime": delta_prime,
                "inputs": inputs,
                "constants": smooth_constants(&inputs),
                "bound": smooth_bias_bound(&inputs, *delta, *delta_prime),
            })
        }
    };
    emit(&value, None)
}
