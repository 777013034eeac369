//! One training run writing `metrics.csv`, `final_report.json`, the
//! effective `config.toml` and `checkpoint.bin` into an output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gcrl_core::trainer::{Clock, Counters, EvalReport, Trainer};
use gcrl_core::Error as CoreError;
use serde_json::{json, Map, Value};

use crate::checkpoint::{self, CheckpointError};
use crate::config::ExperimentConfig;
use crate::executor::Threaded;
use crate::metrics::{truncate_after, MetricsRow, MetricsWriter};

pub const METRICS_FILE: &str = "metrics.csv";
pub const REPORT_FILE: &str = "final_report.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

/// Short revision of the source tree this binary was built from.
pub const BUILD_ID: &str = env!("SOURCE_REVISION");

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Train(#[from] CoreError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn now_seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Continue from `checkpoint.bin` in the output directory if present.
    pub resume: bool,
    /// Stop after this many evaluations in this invocation, as if
    /// interrupted; no final report is written.
    pub stop_after_evals: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Completed,
    Interrupted,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub status: RunStatus,
    pub reports: Vec<EvalReport>,
    pub counters: Counters,
}

pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<RunSummary, RunError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let config_path = out.join(CONFIG_FILE);
    fs::write(&config_path, cfg.to_file_text()).map_err(io_err(&config_path))?;
    let metrics_path = out.join(METRICS_FILE);
    let ckpt_path = out.join(CHECKPOINT_FILE);
    let executor = Threaded::new(cfg.collect_workers);

    let mut trainer = if opts.resume && ckpt_path.exists() {
        let ck = checkpoint::load(&ckpt_path, &cfg.train.agent)?;
        truncate_after(&metrics_path, ck.counters.env_steps).map_err(io_err(&metrics_path))?;
        Trainer::from_parts(cfg.train.clone(), ck.agent, ck.counters, executor)?
    } else {
        if metrics_path.exists() {
            fs::remove_file(&metrics_path).map_err(io_err(&metrics_path))?;
        }
        Trainer::with_executor(cfg.train.clone(), executor)?
    }
    .with_clock(Box::new(WallClock::start()));

    let mut writer = MetricsWriter::append(&metrics_path).map_err(io_err(&metrics_path))?;
    let mut last_ckpt = trainer.counters().env_steps;
    let mut reports = Vec::new();
    loop {
        let report = match trainer.next_report() {
            Ok(Some(r)) => r,
            Ok(None) => break,
            Err(e) => return finish_failed(cfg, out, &trainer.counters(), e),
        };
        writer.write(&MetricsRow::from(&report)).map_err(io_err(&metrics_path))?;
        reports.push(report);
        if cfg.checkpoint_interval > 0 && report.step - last_ckpt >= cfg.checkpoint_interval {
            checkpoint::save(&ckpt_path, trainer.agent(), &trainer.counters())?;
            last_ckpt = report.step;
        }
        if opts.stop_after_evals.is_some_and(|n| reports.len() >= n) {
            return Ok(RunSummary {
                status: RunStatus::Interrupted,
                reports,
                counters: trainer.counters(),
            });
        }
    }
    let counters = trainer.counters();
    if cfg.checkpoint_interval > 0 && last_ckpt != counters.env_steps {
        checkpoint::save(&ckpt_path, trainer.agent(), &counters)?;
    }
    write_report(out, cfg, "completed", reports.last(), &counters, None)?;
    Ok(RunSummary {
        status: RunStatus::Completed,
        reports,
        counters,
    })
}

fn finish_failed(cfg: &ExperimentConfig, out: &Path, counters: &Counters, e: CoreError) -> Result<RunSummary, RunError> {
    let status = if matches!(e, CoreError::Diverged { .. }) { "diverged" } else { "failed" };
    write_report(out, cfg, status, None, counters, Some(&e.to_string()))?;
    Err(e.into())
}

pub fn write_report(
    out: &Path,
    cfg: &ExperimentConfig,
    status: &str,
    last: Option<&EvalReport>,
    counters: &Counters,
    error: Option<&str>,
) -> Result<(), RunError> {
    let mut doc = Map::new();
    doc.insert("status".into(), json!(status));
    if let Some(r) = last {
        let row = MetricsRow::from(r);
        let Value::Object(fields) = serde_json::to_value(row).expect("plain struct") else {
            unreachable!("a struct serializes to an object")
        };
        doc.extend(fields);
    }
    doc.insert("env_steps".into(), json!(counters.env_steps));
    doc.insert("transitions".into(), json!(counters.transitions));
    doc.insert("gradient_updates".into(), json!(counters.updates));
    doc.insert("collect_phases".into(), json!(counters.collect_phases));
    if let Some(e) = error {
        doc.insert("error".into(), json!(e));
    }
    let config: Map<String, Value> = cfg.echo().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    doc.insert("config".into(), Value::Object(config));
    doc.insert("build_id".into(), json!(BUILD_ID));
    let path = out.join(REPORT_FILE);
    let text = serde_json::to_string_pretty(&Value::Object(doc)).expect("JSON values serialize");
    fs::write(&path, text + "\n").map_err(io_err(&path))
}
