//! Synthetic commands: simulate and reproduce.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use bimatch_core::exposure::threshold_exposure;
use bimatch_core::io::{
    write_exposures, write_global_summary_csv, write_panel, write_reproduction_csv, write_summary_csv,
};
use bimatch_core::reproduce::{reproduce, Table};
use bimatch_core::simulator::{
    generate, run_global_study, run_study, summarize, ScenarioSpec, StudyConfig, Target, Variants,
};
use serde::Serialize;

use crate::args::{ReproduceArgs, SimulateArgs, VERSION};

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn config(args: &SimulateArgs) -> StudyConfig {
    let mut spec = ScenarioSpec::new(args.scenario, args.sparsity);
    spec.seed = args.seed;
    spec.kernel = args.kernel;
    spec.threshold = args.threshold;
    spec.target_unit = args.unit;
    spec.variants = Variants {
        heterogeneous: args.heterogeneous,
        ar1_rho: args.ar1,
        network_confounding: args.network_confounding,
        null_effects: args.null_effects,
    };
    if args.free_layout {
        spec.layout_seed = None;
    }
    let mut config = StudyConfig::new(spec, args.reps);
    config.methods = args.methods.clone();
    config.params = args.tuning.params();
    config.solver = args.tuning.solver();
    config.alpha = args.alpha;
    if let Some(naive) = &args.naive {
        config.naive = naive.clone();
    }
    config
}

pub fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let config = config(args);
    config.validate()?;
    let out = &args.out;
    let reps_dir = out.join("replications");
    fs::create_dir_all(&reps_dir)?;
    write_json(
        &out.join("config.json"),
        &serde_json::json!({ "version": VERSION, "threshold": config.spec.threshold(), "config": config }),
    )?;

    if args.global {
        let study = run_global_study(&config)?;
        for rep in &study.replications {
            write_json(&reps_dir.join(format!("rep_{:04}.json", rep.rep)), rep)?;
        }
        write_global_summary_csv(&out.join("summary_global.csv"), &study.summary)?;
        println!(
            "{:<8}{:>10}{:>12}{:>10}{:>10}",
            "method", "mean", "individual", "min p", "global"
        );
        for r in &study.summary {
            println!(
                "{:<8}{:>10.3}{:>12.3}{:>10.3}{:>10.3}",
                r.method, r.mean_estimate, r.individual_rejection, r.min_p_rejection, r.global_rejection
            );
        }
    } else {
        let study = run_study(&config)?;
        for rep in &study.replications {
            write_json(&reps_dir.join(format!("rep_{:04}.json", rep.rep)), rep)?;
        }
        let mut rows = study.summary.clone();
        if config.spec.variants.heterogeneous {
            rows.extend(summarize(&study.replications, Target::Exposed));
            rows.extend(summarize(&study.replications, Target::Matched));
        }
        write_summary_csv(&out.join("summary.csv"), &rows)?;
        println!(
            "{:<8}{:>10}{:>8}{:>8}{:>8}{:>8}",
            "method", "target", "bias", "mse", "cover", "prop"
        );
        for r in &rows {
            let target = serde_json::to_value(r.target)?;
            let prop = r.prop.map_or("-".to_string(), |p| format!("{p:.1}"));
            println!(
                "{:<8}{:>10}{:>8.3}{:>8.3}{:>8.1}{:>8}",
                r.method,
                target.as_str().unwrap_or_default(),
                r.bias,
                r.mse,
                r.coverage,
                prop
            );
        }
    }

    if args.write_panel {
        let data = generate(&config.spec, config.spec.replication_seed(0), true);
        let panel = data.to_panel().context("panel export needs the network")?;
        let dir = out.join("panel");
        write_panel(&dir, &panel)?;
        let series = (1..=panel.outcome_units)
            .map(|j| threshold_exposure(&panel, j, data.threshold))
            .collect::<bimatch_core::Result<Vec<_>>>()?;
        write_exposures(&dir, &series)?;
    }
    Ok(())
}

pub fn run_reproduce(args: &ReproduceArgs) -> Result<()> {
    let table: Table = args.table.parse()?;
    let result = reproduce(table, args.reps, args.seed)?;
    for c in &result.checks {
        println!("[{}] {}", if c.pass { "pass" } else { "FAIL" }, c.label);
    }
    if let Some(out) = &args.out {
        write_reproduction_csv(out, &result)?;
        write_json(
            &out.join("reproduction.json"),
            &serde_json::json!({ "version": VERSION, "reproduction": result }),
        )?;
    }
    let failed = result.checks.iter().filter(|c| !c.pass).count();
    println!(
        "{} of {} checks passed",
        result.checks.len() - failed,
        result.checks.len()
    );
    Ok(())
}
