mod analysis;
mod args;
mod bound;
mod config;
mod study;

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use bimatch_core::Error;
use clap::Parser;
use serde::Serialize;

use args::{Cli, Command};

/// Pretty JSON to `out`, or stdout without one.
pub fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// 2 for unusable input, 3 when nothing could be matched, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(
            Error::Validation(_)
            | Error::MissingExposureSource
            | Error::InvalidParameter(_)
            | Error::InvalidUnit { .. }
            | Error::UnknownTable(_)
            | Error::Parse { .. },
        ) => 2,
        Some(Error::NoMatches | Error::NoMatchesPossible) => 3,
        _ => 1,
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => study::run_simulate(a),
        Command::Match(a) => analysis::run_match(a),
        Command::Estimate(a) => analysis::run_estimate(a),
        Command::TestGlobal(a) => analysis::run_test_global(a),
        Command::Run(a) => analysis::run_pipeline(a),
        Command::Reproduce(a) => study::run_reproduce(a),
        Command::Bound(a) => bound::run_bound(&a.kind),
    }
}

fn run() -> Result<()> {
    let args = config::expand(std::env::args_os().collect())?;
    let cli = Cli::parse_from(args);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()?;
    pool.install(|| dispatch(&cli))
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
