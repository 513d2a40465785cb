use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bimatch_core::data::{CovariateTensor, PanelDataset};
use bimatch_core::io::write_panel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const PERIODS: usize = 1000;
const REGIONS: usize = 10;
const UNITS: usize = 3;
const EFFECT: [f64; UNITS] = [3.0, 0.0, 0.0];

fn bimatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bimatch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Smoke regions upwind of three counties over about three years: smoke is
/// seasonal, each county sees six regions, temperature follows the season and
/// drives the outcome, and only the first county responds to exposure.
fn smoke_panel(dir: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(2020);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let season = |t: usize| (2.0 * PI * t as f64 / 365.0).sin();

    let mut treatments = vec![0.0; PERIODS * REGIONS];
    let mut network = vec![0.0; PERIODS * REGIONS * UNITS];
    let mut temperature = vec![0.0; PERIODS * UNITS];
    let mut weekend = vec![0.0; PERIODS * UNITS];
    let mut outcomes = vec![0.0; PERIODS * UNITS];
    for t in 0..PERIODS {
        let p = 0.1 + 0.4 * season(t).max(0.0);
        for i in 0..REGIONS {
            treatments[t * REGIONS + i] = f64::from(rng.random::<f64>() < p);
        }
        for j in 0..UNITS {
            for i in 0..REGIONS {
                if (i + REGIONS - 2 * j) % REGIONS < 6 {
                    network[(t * REGIONS + i) * UNITS + j] = 1.0;
                }
            }
            let smoky = (0..REGIONS)
                .filter(|&i| network[(t * REGIONS + i) * UNITS + j] == 1.0 && treatments[t * REGIONS + i] == 1.0)
                .count();
            let exposed = smoky >= 2;
            let temp = 15.0 + 10.0 * season(t) + 2.0 * noise.sample(&mut rng);
            let wkd = f64::from(t % 7 >= 5);
            temperature[t * UNITS + j] = temp;
            weekend[t * UNITS + j] = wkd;
            outcomes[t * UNITS + j] =
                20.0 + 0.8 * temp + 2.0 * wkd + if exposed { EFFECT[j] } else { 0.0 } + noise.sample(&mut rng);
        }
    }
    let mut w = Vec::with_capacity(2 * PERIODS * UNITS);
    for (a, b) in temperature.iter().zip(&weekend) {
        w.extend([*a, *b]);
    }
    let mut data = PanelDataset::new(PERIODS, REGIONS, UNITS, treatments, network, outcomes);
    data.w = CovariateTensor::new(vec!["temperature".into(), "weekend".into()], w);
    write_panel(dir, &data).unwrap();
}

fn read(p: PathBuf) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(&p).unwrap_or_else(|_| panic!("{}", p.display()))).unwrap()
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn pipeline_on_a_smoke_panel() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("panel");
    smoke_panel(&data);
    let out = tmp.path().join("run");
    let run = bimatch(&[
        "run",
        "--data",
        path(&data),
        "--exposure",
        "threshold:d=2",
        "--out",
        path(&out),
        "--threads",
        "1",
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    for slug in ["1-1", "1-2", "1-12"] {
        for j in 1..=UNITS {
            let unit = out.join(slug).join(format!("unit_{j}"));
            let est = read(unit.join("estimate.json"));
            let tau = est["tau_hat"].as_f64().unwrap();
            assert!((tau - EFFECT[j - 1]).abs() < 0.6, "{slug} unit {j}: {tau}");
            let set = read(unit.join("matchset.json"));
            assert_eq!(set["balance"]["feasible"], true);
            assert_eq!(read(unit.join("inference.json"))["unit"], j);
        }
        let global = read(out.join(slug).join("global_test.json"));
        assert_eq!(global["reject_global"], true);
        assert_eq!(global["affected"].as_array().unwrap()[0], 1);
    }
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("N-t") && summary.contains("unit 3"));

    let again = tmp.path().join("again");
    let rerun = bimatch(&[
        "run",
        "--data",
        path(&data),
        "--exposure",
        "threshold:d=2",
        "--out",
        path(&again),
    ]);
    assert!(rerun.status.success());
    assert_eq!(tree(&out), tree(&again));

    let unit = out.join("1-1").join("unit_1");
    let alone = tmp.path().join("alone.json");
    let est = bimatch(&[
        "estimate",
        "--from",
        path(&unit.join("matchset.json")),
        "--out",
        path(&alone),
    ]);
    assert!(est.status.success());
    assert_eq!(read(alone), read(unit.join("estimate.json")));

    let reports: Vec<String> = (1..=UNITS)
        .map(|j| path(&out.join("1-1").join(format!("unit_{j}")).join("inference.json")).to_string())
        .collect();
    let mut args = vec!["test-global", "--from"];
    args.extend(reports.iter().map(String::as_str));
    let global = bimatch(&args);
    assert!(global.status.success());
    let printed: serde_json::Value = serde_json::from_slice(&global.stdout).unwrap();
    assert_eq!(printed, read(out.join("1-1").join("global_test.json")));
}

#[test]
fn config_file_supplies_defaults_and_flags_override_it() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("panel");
    smoke_panel(&data);
    let cfg = tmp.path().join("run.cfg");
    fs::write(
        &cfg,
        "unit = 2\nmethod = 1-2\nexposure = threshold:d=2\ndelta_prime = 0.1\n",
    )
    .unwrap();
    let out = bimatch(&["match", "--config", path(&cfg), "--data", path(&data), "--unit", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["unit"], 1);
    assert_eq!(doc["method"], "1-2");
    assert_eq!(doc["params"]["delta_prime"], 0.1);
    assert!(doc["version"].as_str().unwrap().starts_with(env!("CARGO_PKG_VERSION")));
}

#[test]
fn missing_exposure_source_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("outcomes.csv"), "t,j,y\n1,1,0.5\n2,1,0.7\n").unwrap();
    let out = bimatch(&["run", "--data", path(tmp.path()), "--out", path(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing exposure source"));
}

#[test]
fn invalid_panel_exits_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("outcomes.csv"), "t,j,y\n1,1,0.5\n3,1,0.7\n").unwrap();
    fs::write(dir.join("treatments.csv"), "t,i,a\n1,1,1\n2,1,0.5\n3,1,0\n").unwrap();
    fs::write(dir.join("network.csv"), "t,i,j,g\n1,1,1,1\n").unwrap();
    let out = bimatch(&[
        "match",
        "--data",
        path(dir),
        "--unit",
        "1",
        "--exposure",
        "threshold:d=1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exposure_without_usable_matches_exits_with_code_three() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut y = String::from("t,j,y\n");
    let mut e = String::from("t,j,e\n");
    for t in 1..=40 {
        y.push_str(&format!("{t},1,{t}\n"));
        e.push_str(&format!("{t},1,{}\n", u8::from(t <= 5)));
    }
    fs::write(dir.join("outcomes.csv"), y).unwrap();
    fs::write(dir.join("exposures.csv"), e).unwrap();
    let out = bimatch(&["run", "--data", path(dir), "--eps", "0", "--out", path(&dir.join("o"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_table_is_an_error() {
    let out = bimatch(&["reproduce", "--table", "9"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown table"));
}

#[test]
fn simulate_writes_replications_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    let run = |dir: &Path| {
        bimatch(&[
            "simulate",
            "--scenario",
            "c",
            "--reps",
            "2",
            "--seed",
            "7",
            "--methods",
            "1-1,1-1/2",
            "--out",
            path(dir),
            "--write-panel",
        ])
    };
    assert!(run(&out).status.success());
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    for col in ["bias", "mse", "cover", "prop"] {
        assert!(header.split(',').any(|c| c == col), "{header}");
    }
    assert_eq!(csv.lines().count(), 1 + 2 + 3);
    assert!(out.join("replications").join("rep_0001.json").exists());
    assert!(out.join("panel").join("exposures.csv").exists());
    let again = tmp.path().join("again");
    assert!(run(&again).status.success());
    assert_eq!(tree(&out), tree(&again));
}

#[test]
fn bound_calculators() {
    let out = bimatch(&[
        "bound",
        "linear",
        "--beta-time",
        "0.5",
        "--norm-w",
        "2",
        "--delta-prime",
        "0.1",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["bound"].as_f64().unwrap() - (2.0 * 0.5 + 0.1 * 2.0)).abs() < 1e-12);

    let out = bimatch(&[
        "bound",
        "smooth",
        "--c",
        "1",
        "--k",
        "1",
        "--ell",
        "0.5",
        "--horizon",
        "11",
        "--support",
        "-1:1",
        "--delta",
        "1",
        "--delta-prime",
        "0",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    // K = 1 leaves only the remainder term: (T − 1)C + ΣwidthC.
    assert!((v["bound"].as_f64().unwrap() - (10.0 + 2.0)).abs() < 1e-12);
}
