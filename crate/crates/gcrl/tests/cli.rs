use std::path::Path;
use std::process::{Command, Output};

use gcrl::experiment::{METRICS_FILE, REPORT_FILE};
use gcrl::suite::SUITE_REPORT_JSON;

const TINY: &[&str] = &[
    "--preset", "desk", "--env_id", "point_reacher", "--num_envs", "2", "--unroll_length", "16",
    "--min_replay_size", "16", "--batch_size", "8", "--hidden_layers", "8,8", "--representation_dimension", "4",
    "--num_timesteps", "256", "--eval_interval", "128", "--eval_episodes", "2", "--episode_length", "32",
];

fn gcrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcrl"))
        .args(args)
        .env_remove("GCRL_SEED")
        .output()
        .unwrap()
}

fn train_args<'a>(out: &'a Path, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["train", "--out", out.to_str().unwrap()];
    v.extend_from_slice(TINY);
    v.extend_from_slice(extra);
    v
}

#[test]
fn train_succeeds_and_eval_reads_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = gcrl(&train_args(dir.path(), &[]));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join(METRICS_FILE).exists());
    assert!(dir.path().join(REPORT_FILE).exists());

    let out = gcrl(&["eval", "--run", dir.path().to_str().unwrap(), "--episodes", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["episodes"], 3);
    assert!(doc["success_rate"].as_f64().unwrap() <= 1.0);
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = gcrl(&train_args(dir.path(), &["--batch_size", "1"]));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("batch_size") && err.contains(">= 2"), "{err}");

    let out = gcrl(&train_args(dir.path(), &["--energy_function", "manhattan"]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("energy_function"));

    let out = gcrl(&train_args(dir.path(), &["--no_such_key", "1"]));
    assert_eq!(out.status.code(), Some(2));

    let file = dir.path().join("bad.toml");
    std::fs::write(&file, "[agent]\nmystery = 3\n").unwrap();
    let out = gcrl(&train_args(dir.path(), &["--config", file.to_str().unwrap()]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mystery"));

    let out = Command::new(env!("CARGO_BIN_EXE_gcrl"))
        .args(train_args(dir.path(), &[]))
        .env("GCRL_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_beat_environment_beats_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.toml");
    std::fs::write(&file, "[agent]\nenergy_function = dot\n[trainer]\nseed = 5\nutd_denominator = 8\n").unwrap();
    let run = dir.path().join("run");
    let out = Command::new(env!("CARGO_BIN_EXE_gcrl"))
        .args(train_args(&run, &["--config", file.to_str().unwrap(), "--energy_function", "l2"]))
        .env("GCRL_SEED", "9")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(doc["config"]["energy_function"], "l2");
    assert_eq!(doc["config"]["seed"], 9);
    assert_eq!(doc["config"]["utd_denominator"], 8);
}

#[test]
fn runtime_failures_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = gcrl(&["eval", "--run", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "missing config.toml is a config error");

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = gcrl(&train_args(&blocker.join("sub"), &[]));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn suite_exit_status_reflects_cell_failures() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite.txt");
    std::fs::write(
        &suite,
        "envs = point_reacher\nseeds = 0, 1\n[trainer]\npreset = desk\nnum_envs = 2\nunroll_length = 16\n\
         min_replay_size = 16\nbatch_size = 8\nnum_timesteps = 128\neval_interval = 128\neval_episodes = 2\n\
         [agent]\nhidden_layers = 8\nrepresentation_dimension = 4\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = gcrl(&["suite", "--suite", suite.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join(SUITE_REPORT_JSON).exists());
    assert!(String::from_utf8_lossy(&out.stdout).contains("point_reacher"));

    // A cell directory that cannot be created fails that cell only.
    let blocked = dir.path().join("blocked");
    std::fs::create_dir_all(&blocked).unwrap();
    std::fs::write(blocked.join("point_reacher"), "not a directory").unwrap();
    let out = gcrl(&["suite", "--suite", suite.to_str().unwrap(), "--out", blocked.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_reports_exact_step_counts() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("bench.json");
    let out = gcrl(&[
        "bench", "--preset", "desk", "--env_id", "point_mass_circle", "--hidden_layers", "8,8",
        "--unroll_length", "10", "--envs", "1,3", "--iterations", "2", "--train-iterations", "1",
        "--batch_size", "8", "--json", json.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let n = r["num_envs"].as_u64().unwrap();
        assert_eq!(r["collect_steps"].as_u64().unwrap(), n * 10 * r["collect_iterations"].as_u64().unwrap());
        assert_eq!(r["train_steps"].as_u64().unwrap(), n * 10);
    }
}
