use std::path::Path;

use gcrl::config::{flag_layer, read_config_file, resolve, ExperimentConfig};
use gcrl::experiment::{run_experiment, RunOptions, RunStatus, BUILD_ID, CHECKPOINT_FILE, CONFIG_FILE, METRICS_FILE, REPORT_FILE};
use gcrl::metrics::{deterministic_columns, read_metrics, HEADER};
use serde_json::Value;

fn small(extra: &[&str]) -> ExperimentConfig {
    let mut args = vec![
        "--preset", "desk", "--env_id", "point_reacher", "--num_envs", "4", "--unroll_length", "32",
        "--min_replay_size", "32", "--batch_size", "32", "--hidden_layers", "16,16",
        "--representation_dimension", "8", "--num_timesteps", "10000", "--eval_interval", "2500",
        "--eval_episodes", "4", "--episode_length", "64", "--seed", "7",
    ];
    args.extend_from_slice(extra);
    resolve(&[&flag_layer(&args).unwrap()]).unwrap()
}

fn run(cfg: &ExperimentConfig, out: &Path) {
    let s = run_experiment(cfg, out, &RunOptions::default()).unwrap();
    assert_eq!(s.status, RunStatus::Completed);
}

#[test]
fn tiny_run_writes_metrics_report_config_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(&[]);
    run(&cfg, dir.path());

    let text = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(text.lines().next().unwrap(), HEADER.join(","));
    let rows = read_metrics(&dir.path().join(METRICS_FILE)).unwrap();
    assert!(rows.len() >= 2, "{} rows", rows.len());
    assert!(rows.windows(2).all(|w| w[0].step < w[1].step));
    assert!(rows.last().unwrap().step >= 10_000);
    for r in &rows {
        assert!((0.0..=1.0).contains(&r.success_rate) && (0.0..=1.0).contains(&r.time_near_goal));
    }
    assert!(dir.path().join(CHECKPOINT_FILE).exists());

    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(report["status"], "completed");
    assert_eq!(report["build_id"], BUILD_ID);
    assert_eq!(report["step"], rows.last().unwrap().step);
    for h in HEADER {
        assert!(report.get(h).is_some(), "report lacks {h}");
    }
}

#[test]
fn echoed_config_equals_the_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(&["--num_timesteps", "600", "--eval_interval", "300", "--entropy_coef", "auto:0.5"]);
    run(&cfg, dir.path());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap()).unwrap();
    for (key, value) in cfg.echo() {
        assert_eq!(report["config"][key], value, "{key}");
    }
    let reread = resolve(&[&read_config_file(&dir.path().join(CONFIG_FILE)).unwrap()]).unwrap();
    assert_eq!(reread, cfg);
}

#[test]
fn reruns_match_except_wall_clock_for_any_worker_count() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&small(&["--num_timesteps", "3000", "--eval_interval", "1000"]), a.path());
    run(
        &small(&["--num_timesteps", "3000", "--eval_interval", "1000", "--collect_workers", "3"]),
        b.path(),
    );
    let ca = deterministic_columns(&a.path().join(METRICS_FILE)).unwrap();
    let cb = deterministic_columns(&b.path().join(METRICS_FILE)).unwrap();
    assert!(ca.len() >= 3);
    assert_eq!(ca, cb);
}

#[test]
fn resumed_run_continues_step_numbering() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(&["--num_timesteps", "4000", "--eval_interval", "1000"]);
    let first = run_experiment(
        &cfg,
        dir.path(),
        &RunOptions {
            resume: false,
            stop_after_evals: Some(2),
        },
    )
    .unwrap();
    assert_eq!(first.status, RunStatus::Interrupted);
    assert!(!dir.path().join(REPORT_FILE).exists());
    let before = read_metrics(&dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(before.len(), 2);

    let second = run_experiment(
        &cfg,
        dir.path(),
        &RunOptions {
            resume: true,
            stop_after_evals: None,
        },
    )
    .unwrap();
    assert_eq!(second.status, RunStatus::Completed);
    assert!(second.reports[0].step > before[1].step);
    let rows = read_metrics(&dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(&rows[..2], &before[..]);
    assert!(rows.len() > 2);
    assert!(rows.windows(2).all(|w| w[0].step < w[1].step), "{rows:?}");
    assert!(rows.last().unwrap().step >= 4000);
}
