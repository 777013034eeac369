//! Benchmark suites: every (environment, seed) cell is an ordinary
//! experiment in its own directory; per-environment results are aggregated
//! across seeds from the cells' `metrics.csv` files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gcrl_core::env::EnvId;
use gcrl_core::stats::{iqm, iqm_stderr};
use serde::{Deserialize, Serialize};

use crate::config::{flag_layer, parse_config_text, resolve, ConfigError, Layer};
use crate::experiment::{run_experiment, RunOptions, METRICS_FILE};
use crate::metrics::read_metrics;

pub const SUITE_REPORT_JSON: &str = "suite_report.json";
pub const SUITE_REPORT_TXT: &str = "suite_report.txt";

/// Suite description: `envs` and `seeds` lists followed by ordinary config
/// keys that apply to every cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    pub envs: Vec<EnvId>,
    pub seeds: Vec<u64>,
    pub overrides: Layer,
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value
        .trim()
        .trim_start_matches('[')
        .trim_end_matches(']')
        .split(',')
        .map(|s| s.trim().trim_matches('"'))
        .filter(|s| !s.is_empty())
}

pub fn parse_suite_text(text: &str) -> Result<SuiteConfig, ConfigError> {
    let mut envs = Vec::new();
    let mut seeds = Vec::new();
    let mut rest = String::new();
    for line in text.lines() {
        let (key, value) = line.split_once('=').unwrap_or((line, ""));
        match key.trim() {
            "envs" => {
                for e in split_list(value) {
                    envs.push(e.parse::<EnvId>().map_err(|err| ConfigError::new("envs", err.to_string()))?);
                }
            }
            "seeds" => {
                for s in split_list(value) {
                    seeds.push(
                        s.parse::<u64>()
                            .map_err(|_| ConfigError::new("seeds", format!("bad seed `{s}`")))?,
                    );
                }
            }
            "env_id" | "seed" => {
                return Err(ConfigError::new(key.trim(), "set per cell; use `envs` / `seeds` in a suite"));
            }
            _ => {
                rest.push_str(line);
                rest.push('\n');
            }
        }
    }
    if envs.is_empty() || seeds.is_empty() {
        return Err(ConfigError::new("envs", "a suite needs non-empty `envs` and `seeds` lists"));
    }
    Ok(SuiteConfig {
        envs,
        seeds,
        overrides: parse_config_text(&rest)?,
    })
}

pub fn cell_dir(root: &Path, env: EnvId, seed: u64) -> PathBuf {
    root.join(env.name()).join(format!("seed_{seed}"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub env: String,
    pub seed: u64,
    pub success_rate: Option<f64>,
    pub time_near_goal: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSummary {
    pub env: String,
    pub seeds: usize,
    pub success_rate_iqm: f64,
    pub success_rate_stderr: f64,
    pub time_near_goal_iqm: f64,
    pub time_near_goal_stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub envs: Vec<EnvSummary>,
    pub cells: Vec<CellResult>,
    pub failed_cells: usize,
}

/// Runs every cell in order; a failing cell is recorded and the suite
/// carries on. `extra` layers (environment variables, flags) take
/// precedence over the suite file.
pub fn run_suite(suite: &SuiteConfig, root: &Path, extra: &[&Layer]) -> Result<SuiteReport, std::io::Error> {
    let mut errors = Vec::new();
    for &env in &suite.envs {
        for &seed in &suite.seeds {
            let dir = cell_dir(root, env, seed);
            let cell = flag_layer(&["--env_id".to_string(), env.name().to_string(), "--seed".into(), seed.to_string()])
                .expect("known keys");
            let mut layers: Vec<&Layer> = vec![&suite.overrides];
            layers.extend_from_slice(extra);
            layers.push(&cell);
            let outcome = resolve(&layers)
                .map_err(|e| e.to_string())
                .and_then(|cfg| run_experiment(&cfg, &dir, &RunOptions::default()).map_err(|e| e.to_string()));
            if let Err(e) = outcome {
                errors.push((env, seed, e));
            }
        }
    }
    let mut report = aggregate(root, &suite.envs, &suite.seeds)?;
    for (env, seed, e) in errors {
        if let Some(c) = report.cells.iter_mut().find(|c| c.env == env.name() && c.seed == seed) {
            c.error = Some(e);
        }
    }
    report.failed_cells = report.cells.iter().filter(|c| c.error.is_some()).count();
    write_suite_report(root, &report)?;
    Ok(report)
}

/// Reads the last row of each cell's `metrics.csv` and aggregates per
/// environment with the interquartile mean and its standard error.
pub fn aggregate(root: &Path, envs: &[EnvId], seeds: &[u64]) -> Result<SuiteReport, std::io::Error> {
    let mut cells = Vec::new();
    let mut summaries = Vec::new();
    for &env in envs {
        let mut succ = Vec::new();
        let mut near = Vec::new();
        for &seed in seeds {
            let path = cell_dir(root, env, seed).join(METRICS_FILE);
            let last = read_metrics(&path).map(|rows| rows.last().copied());
            let cell = match last {
                Ok(Some(row)) => {
                    succ.push(row.success_rate);
                    near.push(row.time_near_goal);
                    CellResult {
                        env: env.name().into(),
                        seed,
                        success_rate: Some(row.success_rate),
                        time_near_goal: Some(row.time_near_goal),
                        error: None,
                    }
                }
                Ok(None) => missing(env, seed, "metrics.csv has no rows"),
                Err(e) => missing(env, seed, &e.to_string()),
            };
            cells.push(cell);
        }
        if !succ.is_empty() {
            let stat = |v: &[f64]| (iqm(v).unwrap_or(f64::NAN), iqm_stderr(v).unwrap_or(f64::NAN));
            let (s, se) = stat(&succ);
            let (t, te) = stat(&near);
            summaries.push(EnvSummary {
                env: env.name().into(),
                seeds: succ.len(),
                success_rate_iqm: s,
                success_rate_stderr: se,
                time_near_goal_iqm: t,
                time_near_goal_stderr: te,
            });
        }
    }
    let failed_cells = cells.iter().filter(|c| c.error.is_some()).count();
    Ok(SuiteReport {
        envs: summaries,
        cells,
        failed_cells,
    })
}

fn missing(env: EnvId, seed: u64, why: &str) -> CellResult {
    CellResult {
        env: env.name().into(),
        seed,
        success_rate: None,
        time_near_goal: None,
        error: Some(why.to_string()),
    }
}

pub fn render_table(report: &SuiteReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<20} {:>5}  {:>18}  {:>18}",
        "env", "seeds", "success (IQM±se)", "near goal (IQM±se)"
    );
    for e in &report.envs {
        let _ = writeln!(
            out,
            "{:<20} {:>5}  {:>10.4} ± {:<6.4} {:>10.4} ± {:<6.4}",
            e.env, e.seeds, e.success_rate_iqm, e.success_rate_stderr, e.time_near_goal_iqm, e.time_near_goal_stderr
        );
    }
    if report.failed_cells > 0 {
        let _ = writeln!(out, "{} cell(s) failed", report.failed_cells);
        for c in report.cells.iter().filter(|c| c.error.is_some()) {
            let _ = writeln!(out, "  {} seed {}: {}", c.env, c.seed, c.error.as_deref().unwrap_or(""));
        }
    }
    out
}

pub fn write_suite_report(root: &Path, report: &SuiteReport) -> Result<(), std::io::Error> {
    fs::create_dir_all(root)?;
    let json = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    fs::write(root.join(SUITE_REPORT_JSON), json + "\n")?;
    fs::write(root.join(SUITE_REPORT_TXT), render_table(report))
}
