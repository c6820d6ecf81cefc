//! Batch front end for the `wulffgraph` experiments.
//!
//! A run reads one TOML configuration, executes the pipeline it names and
//! writes into the output directory:
//!
//! - `report.json`: results and the list of failed invariants. It depends only
//!   on the configuration and the seed, so reruns are byte-identical.
//! - `manifest.json`: configuration echo, toolkit version, thread count and
//!   timings. Everything run-specific lives here.
//! - pipeline tables (`*.csv`), graph files and gnuplot scripts (`*.gp`).
//!
//! Exit status: 0 when every enabled check passes, 1 when an invariant
//! fails (named on stderr and in the report), 2 for configuration errors.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod pipeline;

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use wulffgraph::io::{to_json, write_atomic};
use wulffgraph::wulff::Family;

pub use config::{Command, ConfigError, RunConfig};
pub use pipeline::{Artifact, Outcome};

pub const TOOLKIT: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Serialize)]
struct Report<'a> {
    toolkit: &'a str,
    command: &'a str,
    seed: u64,
    integrand: Family,
    negated: bool,
    passed: bool,
    failures: &'a [String],
    results: &'a Value,
}

/// `report.json` contents for a finished pipeline.
pub fn report_json(cfg: &RunConfig, outcome: &Outcome) -> wulffgraph::Result<String> {
    let family = cfg
        .integrand
        .family()
        .map_err(|(k, m)| wulffgraph::Error::Setup(format!("integrand.{k}: {m}")))?;
    to_json(&Report {
        toolkit: TOOLKIT,
        command: cfg.command.name(),
        seed: cfg.seed,
        integrand: family,
        negated: cfg.integrand.negate,
        passed: outcome.failures.is_empty(),
        failures: &outcome.failures,
        results: &outcome.results,
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    toolkit: &'a str,
    command: &'a str,
    config_path: Option<String>,
    config: &'a RunConfig,
    seed: u64,
    threads: usize,
    started_unix: f64,
    wall_time_seconds: f64,
    passed: bool,
    artifacts: Vec<&'a str>,
}

/// Result of [`execute`].
#[derive(Debug)]
pub struct RunSummary {
    pub outcome: Outcome,
    pub report: String,
    pub wall_time: f64,
}

/// Runs the configured pipeline and writes all artifacts atomically into `out`.
pub fn execute(cfg: &RunConfig, config_path: Option<&Path>, out: &Path) -> wulffgraph::Result<RunSummary> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let clock = Instant::now();
    let outcome = pipeline::run(cfg)?;
    let report = report_json(cfg, &outcome)?;
    std::fs::create_dir_all(out)?;
    for a in &outcome.artifacts {
        write_atomic(&out.join(&a.name), &a.bytes)?;
    }
    write_atomic(&out.join("report.json"), report.as_bytes())?;
    let wall_time = clock.elapsed().as_secs_f64();
    let mut names: Vec<&str> = outcome.artifacts.iter().map(|a| a.name.as_str()).collect();
    names.push("report.json");
    let manifest = Manifest {
        toolkit: TOOLKIT,
        command: cfg.command.name(),
        config_path: config_path.map(|p| p.display().to_string()),
        config: cfg,
        seed: cfg.seed,
        threads: rayon::current_num_threads(),
        started_unix: started,
        wall_time_seconds: wall_time,
        passed: outcome.failures.is_empty(),
        artifacts: names,
    };
    write_atomic(&out.join("manifest.json"), to_json(&manifest)?.as_bytes())?;
    Ok(RunSummary { outcome, report, wall_time })
}
