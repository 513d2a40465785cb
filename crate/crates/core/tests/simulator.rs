use std::collections::BTreeMap;

use bimatch_core::data::{balance_columns, SummaryWeights, WeightSpec};
use bimatch_core::exposure::threshold_exposure;
use bimatch_core::simulator::{
    calibrate_threshold, gen_locations, generate, run_replication, run_study, summarize, NaiveKind, Scenario,
    ScenarioSpec, Sparsity, StudyConfig, Target, NEIGHBOR_RADIUS,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn medium(scenario: Scenario) -> ScenarioSpec {
    ScenarioSpec::new(scenario, Sparsity::Medium)
}

#[test]
fn locations_follow_the_stratified_blocks() {
    let layout = gen_locations(50, 200, &mut ChaCha8Rng::seed_from_u64(3));
    let all = layout.interventional.iter().chain(&layout.outcome);
    assert!(all.flatten().all(|&c| (0.0..=1.0).contains(&c)));
    let left = |k: usize| (1..=10).contains(&k) || (31..=40).contains(&k);
    let low = |k: usize| (1..=10).contains(&k) || (21..=30).contains(&k);
    for (idx, p) in layout.interventional.iter().enumerate() {
        let k = idx + 1;
        assert_eq!(p[0] < 0.5, left(k), "x of unit {k}");
        assert_eq!(p[1] < 0.5, low(k), "y of unit {k}");
    }
    let left = |k: usize| (1..=68).contains(&k) || (113..=156).contains(&k);
    let low = |k: usize| (1..=50).contains(&k) || (101..=150).contains(&k);
    for (idx, p) in layout.outcome.iter().enumerate() {
        let k = idx + 1;
        assert_eq!(p[0] < 0.5, left(k));
        assert_eq!(p[1] < 0.5, low(k));
    }
    assert_eq!(layout, gen_locations(50, 200, &mut ChaCha8Rng::seed_from_u64(3)));
}

#[test]
fn generation_is_deterministic() {
    let spec = medium(Scenario::E);
    let a = generate(&spec, 11, false);
    assert_eq!(a, generate(&spec, 11, false));
    assert_ne!(a.outcomes, generate(&spec, 12, false).outcomes);
}

#[test]
fn fixed_layout_is_shared_and_free_layout_is_redrawn() {
    let mut spec = medium(Scenario::A);
    assert_eq!(generate(&spec, 1, false).layout, generate(&spec, 2, false).layout);
    spec.layout_seed = None;
    assert_ne!(generate(&spec, 1, false).layout, generate(&spec, 2, false).layout);
}

#[test]
fn location_averages_match_a_direct_neighbor_oracle() {
    let data = generate(&medium(Scenario::C), 5, false);
    let cov = &data.covariates;
    let (n, m) = (data.spec.n, data.spec.m);
    let mut empty = 0;
    for j in 0..m {
        let nbrs: Vec<usize> = (0..n)
            .filter(|&i| {
                let (a, b) = (data.layout.interventional[i], data.layout.outcome[j]);
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() <= NEIGHBOR_RADIUS
            })
            .collect();
        let expected = if nbrs.is_empty() {
            empty += 1;
            0.0
        } else {
            nbrs.iter().map(|&i| cov.x2[i]).sum::<f64>() / nbrs.len() as f64
        };
        assert!((cov.w4[j] - expected).abs() < 1e-12, "unit {j}");
    }
    assert!(empty < m);
    for i in 0..n {
        let nbrs: Vec<usize> = (0..m).filter(|&j| data.layout.dist(i, j) <= NEIGHBOR_RADIUS).collect();
        let expected = if nbrs.is_empty() {
            0.0
        } else {
            nbrs.iter().map(|&j| cov.w2[j]).sum::<f64>() / nbrs.len() as f64
        };
        assert!((cov.x4[i] - expected).abs() < 1e-12);
    }
}

#[test]
fn uniform_treatment_has_mean_one_half() {
    let data = generate(&medium(Scenario::A), 9, false);
    let mean = data.treatments.iter().map(|&a| f64::from(a)).sum::<f64>() / data.treatments.len() as f64;
    assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
}

#[test]
fn ar1_errors_have_the_requested_autocorrelation() {
    let mut spec = medium(Scenario::A);
    spec.variants.ar1_rho = Some(0.8);
    let data = generate(&spec, 4, false);
    let (m, periods) = (spec.m, spec.periods);
    let mut acf = 0.0;
    for j in 0..m {
        let e: Vec<f64> = (0..periods)
            .map(|t| {
                let k = t * m + j;
                let effect = if data.exposure[k] { data.effects[k] } else { 0.0 };
                data.outcomes[k] - effect - data.covariates.w2[j]
            })
            .collect();
        let mean = e.iter().sum::<f64>() / periods as f64;
        let num: f64 = e.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        let den: f64 = e.iter().map(|v| (v - mean).powi(2)).sum();
        acf += num / den;
    }
    acf /= m as f64;
    assert!((acf - 0.8).abs() < 0.03, "lag-1 autocorrelation {acf}");
}

#[test]
fn null_effects_are_zero_and_heterogeneous_effects_trend_down() {
    let mut spec = medium(Scenario::B);
    spec.variants.null_effects = true;
    assert!(generate(&spec, 1, false).effects.iter().all(|&e| e == 0.0));

    let mut spec = medium(Scenario::B);
    spec.variants.heterogeneous = true;
    let data = generate(&spec, 1, false);
    let m = spec.m;
    let early: f64 = data.effects[..50 * m].iter().sum::<f64>() / (50 * m) as f64;
    let late: f64 = data.effects[350 * m..].iter().sum::<f64>() / (50 * m) as f64;
    assert!((early - (1.0 + 0.005 * 375.5)).abs() < 0.05, "early {early}");
    assert!((late - (1.0 + 0.005 * 25.5)).abs() < 0.05, "late {late}");
}

#[test]
fn exposure_counts_land_in_the_medium_band() {
    let (lo, hi) = Sparsity::Medium.band();
    for scenario in [Scenario::A, Scenario::B, Scenario::D] {
        let spec = medium(scenario);
        let reps = 20;
        let hits = (0..reps)
            .filter(|&rep| {
                let data = generate(&spec, spec.replication_seed(rep), false);
                let count = data.exposure_series(0).iter().filter(|&&e| e).count();
                (lo..=hi).contains(&count)
            })
            .count();
        assert!(hits as f64 >= 0.9 * reps as f64, "({scenario}) {hits}/{reps}");
    }
}

#[test]
fn calibration_recovers_the_catalog_threshold() {
    let spec = medium(Scenario::A);
    let cal = calibrate_threshold(&spec, 10).unwrap();
    assert_eq!(cal.threshold, spec.threshold());
    assert!(cal.in_band >= 0.9);
    assert!(cal.mean_counts.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn single_replication_summary_equals_the_replication() {
    let config = StudyConfig::new(medium(Scenario::A), 1);
    let study = run_study(&config).unwrap();
    let rep = run_replication(&config, 0);
    assert_eq!(study.replications, vec![rep.clone()]);
    for (row, rec) in study.summary.iter().zip(&rep.records) {
        let tau = rec.tau_hat.unwrap();
        assert_eq!(row.method, rec.method);
        assert!((row.bias - (tau - rep.truth_all)).abs() < 1e-12);
        assert!((row.mse - (tau - rep.truth_all).powi(2)).abs() < 1e-12);
        let covered = rec.ci.unwrap()[0] <= rep.truth_all && rep.truth_all <= rec.ci.unwrap()[1];
        assert_eq!(row.coverage, if covered { 100.0 } else { 0.0 });
    }
}

#[test]
fn studies_are_reproducible_byte_for_byte() {
    let mut config = StudyConfig::new(medium(Scenario::B), 3);
    config.naive = vec![NaiveKind::T];
    let a = serde_json::to_string(&run_study(&config).unwrap()).unwrap();
    let b = serde_json::to_string(&run_study(&config).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn matched_target_is_omitted_for_naive_rows() {
    let mut spec = medium(Scenario::B);
    spec.variants.heterogeneous = true;
    let study = run_study(&StudyConfig::new(spec, 2)).unwrap();
    let rows = summarize(&study.replications, Target::Matched);
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.prop.is_some()));
}

#[test]
fn panel_export_agrees_with_the_simulation() {
    let spec = medium(Scenario::D);
    let data = generate(&spec, 8, true);
    let panel = data.to_panel().unwrap();
    assert!(panel.validate().is_valid());
    let j = 0;
    let exposure = threshold_exposure(&panel, j + 1, data.threshold).unwrap();
    assert_eq!(exposure.values, data.exposure_series(j));
    assert_eq!(panel.outcome_series(j), data.outcome_series(j));

    let mut q = vec![0.0; spec.n];
    for &p in &data.neighbors.of_outcome[j] {
        q[data.neighbors.pairs[p].0] = data.neighbors.q(j);
    }
    let mut weights = WeightSpec::default();
    weights.per_covariate = BTreeMap::from([("P".to_string(), SummaryWeights::new(Some("P".into()), q).unwrap())]);
    let cols = balance_columns(&panel, j, &weights).unwrap();
    let sim = data.balance_columns(j);
    for (label, values) in sim.labels.iter().zip(&sim.values) {
        let k = cols.labels.iter().position(|l| l == label).unwrap();
        for (a, b) in cols.values[k].iter().zip(values) {
            assert!((a - b).abs() < 1e-12, "{label}");
        }
    }
}
