//! Throughput benchmark: environment steps per second for collection with a
//! fixed (untrained) actor and for full collect-and-update iterations, over a
//! range of vector sizes.

use std::fmt::Write as _;
use std::time::Instant;

use gcrl_core::trainer::{CollectPolicy, Trainer};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::executor::Threaded;

pub const DEFAULT_ENV_COUNTS: [usize; 5] = [1, 8, 64, 256, 1024];

#[derive(Clone, Debug)]
pub struct BenchOptions {
    pub env_counts: Vec<usize>,
    /// Collect phases timed per vector size; more are run until
    /// `min_seconds` has elapsed.
    pub collect_iterations: usize,
    pub min_seconds: f64,
    /// Full training iterations per vector size; 0 skips the train column.
    pub train_iterations: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            env_counts: DEFAULT_ENV_COUNTS.to_vec(),
            collect_iterations: 4,
            min_seconds: 0.5,
            train_iterations: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub num_envs: usize,
    pub unroll_length: usize,
    pub collect_iterations: u64,
    pub collect_steps: u64,
    pub collect_seconds: f64,
    pub collect_steps_per_second: f64,
    pub train_iterations: u64,
    pub train_steps: u64,
    pub train_updates: u64,
    pub train_seconds: f64,
    pub train_steps_per_second: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] gcrl_core::Error),
    #[error("step accounting: {num_envs} envs x {unroll} steps x {iterations} iterations x repeat {repeat} != {counted} counted")]
    Accounting {
        num_envs: usize,
        unroll: usize,
        iterations: u64,
        repeat: usize,
        counted: u64,
    },
}

fn check(num_envs: usize, unroll: usize, repeat: usize, iterations: u64, counted: u64) -> Result<(), BenchError> {
    if (num_envs * unroll * repeat) as u64 * iterations != counted {
        return Err(BenchError::Accounting {
            num_envs,
            unroll,
            iterations,
            repeat,
            counted,
        });
    }
    Ok(())
}

/// Benchmarks one vector size. The replay buffer is shrunk to a few unrolls
/// per environment so large vectors fit in memory; prefill is a single
/// random-action phase and is not timed.
pub fn bench_one(cfg: &ExperimentConfig, num_envs: usize, opts: &BenchOptions) -> Result<BenchRow, BenchError> {
    let mut train = cfg.train.clone();
    train.num_envs = num_envs;
    train.min_replay_size = train.unroll_length;
    train.max_replay_size = 4 * train.unroll_length;
    let (unroll, repeat) = (train.unroll_length, train.action_repeat);
    let mut trainer = Trainer::with_executor(train, Threaded::new(cfg.collect_workers))?;

    let start_steps = trainer.counters().env_steps;
    let t0 = Instant::now();
    let mut iterations = 0u64;
    while iterations < opts.collect_iterations.max(1) as u64 || t0.elapsed().as_secs_f64() < opts.min_seconds {
        trainer.collect(CollectPolicy::Actor)?;
        iterations += 1;
    }
    let collect_seconds = t0.elapsed().as_secs_f64();
    let collect_steps = trainer.counters().env_steps - start_steps;
    check(num_envs, unroll, repeat, iterations, collect_steps)?;

    let mut row = BenchRow {
        num_envs,
        unroll_length: unroll,
        collect_iterations: iterations,
        collect_steps,
        collect_seconds,
        collect_steps_per_second: collect_steps as f64 / collect_seconds,
        train_iterations: 0,
        train_steps: 0,
        train_updates: 0,
        train_seconds: 0.0,
        train_steps_per_second: None,
    };
    if opts.train_iterations > 0 {
        trainer.prefill()?;
        let before = trainer.counters();
        let t0 = Instant::now();
        for _ in 0..opts.train_iterations {
            let written = trainer.collect(CollectPolicy::Actor)?;
            trainer.run_updates(written)?;
        }
        let seconds = t0.elapsed().as_secs_f64();
        let after = trainer.counters();
        row.train_iterations = opts.train_iterations as u64;
        row.train_steps = after.env_steps - before.env_steps;
        row.train_updates = after.updates - before.updates;
        row.train_seconds = seconds;
        row.train_steps_per_second = Some(row.train_steps as f64 / seconds);
        check(num_envs, unroll, repeat, row.train_iterations, row.train_steps)?;
    }
    Ok(row)
}

pub fn run_bench(cfg: &ExperimentConfig, opts: &BenchOptions) -> Result<Vec<BenchRow>, BenchError> {
    opts.env_counts.iter().map(|&n| bench_one(cfg, n, opts)).collect()
}

pub fn render_table(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let base = rows.iter().find(|r| r.num_envs == 1).map(|r| r.collect_steps_per_second);
    let _ = writeln!(
        out,
        "{:>8} {:>12} {:>16} {:>10} {:>10} {:>16}",
        "envs", "steps", "collect steps/s", "vs 1 env", "updates", "train steps/s"
    );
    for r in rows {
        let speedup = base.map_or("-".to_string(), |b| format!("{:.1}x", r.collect_steps_per_second / b));
        let train = r.train_steps_per_second.map_or("-".to_string(), |s| format!("{s:.0}"));
        let _ = writeln!(
            out,
            "{:>8} {:>12} {:>16.0} {:>10} {:>10} {:>16}",
            r.num_envs, r.collect_steps, r.collect_steps_per_second, speedup, r.train_updates, train
        );
    }
    out
}
