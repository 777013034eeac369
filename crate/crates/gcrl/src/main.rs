use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};
use gcrl::bench::{self, BenchOptions};
use gcrl::checkpoint;
use gcrl::config::{env_layer, read_config_file, resolve, ConfigError, Layer, KEYS};
use gcrl::experiment::{self, RunOptions, CHECKPOINT_FILE, CONFIG_FILE};
use gcrl::suite;
use gcrl_core::trainer::{evaluate, ModePolicy};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

enum Failure {
    Config(String),
    Run(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn key_args(cmd: Command) -> Command {
    KEYS.iter().fold(cmd, |cmd, (key, section)| {
        cmd.arg(
            Arg::new(*key)
                .long(*key)
                .overrides_with(*key)
                .value_name("VALUE")
                .help_heading(format!("[{}] keys", section.name())),
        )
    })
}

fn cli() -> Command {
    let config = Arg::new("config")
        .long("config")
        .value_name("FILE")
        .value_parser(value_parser!(PathBuf))
        .help("Config file with [env], [agent] and [trainer] sections");
    Command::new("gcrl")
        .about("Contrastive goal-conditioned RL: train, benchmark and evaluate")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(key_args(
            Command::new("train")
                .about("Train one agent, writing metrics, report and checkpoints")
                .arg(config.clone())
                .arg(
                    Arg::new("out")
                        .long("out")
                        .value_name("DIR")
                        .required(true)
                        .value_parser(value_parser!(PathBuf)),
                )
                .arg(
                    Arg::new("resume")
                        .long("resume")
                        .action(ArgAction::SetTrue)
                        .help("Continue from the checkpoint in --out"),
                ),
        ))
        .subcommand(key_args(
            Command::new("bench")
                .about("Measure collection and training throughput")
                .arg(config.clone())
                .arg(
                    Arg::new("envs")
                        .long("envs")
                        .value_name("N,N,..")
                        .value_delimiter(',')
                        .value_parser(value_parser!(usize))
                        .help("Vector sizes [default: 1,8,64,256,1024]"),
                )
                .arg(
                    Arg::new("iterations")
                        .long("iterations")
                        .value_parser(value_parser!(usize))
                        .default_value("4")
                        .help("Minimum collect phases per vector size"),
                )
                .arg(
                    Arg::new("train_iterations")
                        .long("train-iterations")
                        .value_parser(value_parser!(usize))
                        .default_value("1")
                        .help("Collect-and-update iterations per size; 0 skips"),
                )
                .arg(
                    Arg::new("json")
                        .long("json")
                        .value_name("FILE")
                        .value_parser(value_parser!(PathBuf)),
                ),
        ))
        .subcommand(key_args(
            Command::new("suite")
                .about("Run every (env, seed) cell of a suite and aggregate with IQM")
                .arg(
                    Arg::new("suite")
                        .long("suite")
                        .value_name("FILE")
                        .required(true)
                        .value_parser(value_parser!(PathBuf)),
                )
                .arg(
                    Arg::new("out")
                        .long("out")
                        .value_name("DIR")
                        .required(true)
                        .value_parser(value_parser!(PathBuf)),
                ),
        ))
        .subcommand(
            Command::new("eval")
                .about("Evaluate the checkpoint of a finished or interrupted run")
                .arg(
                    Arg::new("run")
                        .long("run")
                        .value_name("DIR")
                        .required(true)
                        .value_parser(value_parser!(PathBuf)),
                )
                .arg(
                    Arg::new("episodes")
                        .long("episodes")
                        .value_parser(value_parser!(usize))
                        .help("Defaults to the run's eval_episodes"),
                )
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .value_parser(value_parser!(u64))
                        .default_value("0"),
                ),
        )
}

fn flag_values(m: &ArgMatches) -> Layer {
    KEYS.iter()
        .filter_map(|(k, _)| m.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
        .collect()
}

fn layered(m: &ArgMatches, file: Option<&Path>) -> Result<Vec<Layer>, Failure> {
    let file = match file {
        Some(p) => read_config_file(p)?,
        None => Layer::new(),
    };
    let env = env_layer(std::env::vars())?;
    Ok(vec![file, env, flag_values(m)])
}

fn config_from(m: &ArgMatches) -> Result<gcrl::config::ExperimentConfig, Failure> {
    let layers = layered(m, m.get_one::<PathBuf>("config").map(PathBuf::as_path))?;
    let refs: Vec<&Layer> = layers.iter().collect();
    Ok(resolve(&refs)?)
}

fn cmd_train(m: &ArgMatches) -> Result<(), Failure> {
    let cfg = config_from(m)?;
    let out = m.get_one::<PathBuf>("out").expect("required");
    let opts = RunOptions {
        resume: m.get_flag("resume"),
        stop_after_evals: None,
    };
    let summary = experiment::run_experiment(&cfg, out, &opts).map_err(|e| Failure::Run(e.to_string()))?;
    if let Some(r) = summary.reports.last() {
        println!(
            "step {}  success {:.3}  near goal {:.3}  {:.0} steps/s",
            r.step, r.success_rate, r.time_near_goal, r.steps_per_second
        );
    }
    Ok(())
}

fn cmd_bench(m: &ArgMatches) -> Result<(), Failure> {
    let cfg = config_from(m)?;
    let mut opts = BenchOptions {
        collect_iterations: *m.get_one::<usize>("iterations").expect("default"),
        train_iterations: *m.get_one::<usize>("train_iterations").expect("default"),
        ..BenchOptions::default()
    };
    if let Some(envs) = m.get_many::<usize>("envs") {
        opts.env_counts = envs.copied().collect();
    }
    if opts.env_counts.contains(&0) {
        return Err(Failure::Config("--envs: vector sizes must be positive".into()));
    }
    let rows = bench::run_bench(&cfg, &opts).map_err(|e| Failure::Run(e.to_string()))?;
    print!("{}", bench::render_table(&rows));
    if let Some(path) = m.get_one::<PathBuf>("json") {
        let text = serde_json::to_string_pretty(&rows).expect("plain rows");
        std::fs::write(path, text + "\n").map_err(|e| Failure::Run(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_suite(m: &ArgMatches) -> Result<bool, Failure> {
    let path = m.get_one::<PathBuf>("suite").expect("required");
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let suite = suite::parse_suite_text(&text)?;
    let extra = layered(m, None)?;
    let refs: Vec<&Layer> = extra.iter().collect();
    // Surface configuration mistakes before any cell runs.
    let mut probe = vec![&suite.overrides];
    probe.extend_from_slice(&refs);
    resolve(&probe)?;
    let out = m.get_one::<PathBuf>("out").expect("required");
    let report = suite::run_suite(&suite, out, &refs).map_err(|e| Failure::Run(e.to_string()))?;
    print!("{}", suite::render_table(&report));
    Ok(report.failed_cells == 0)
}

fn cmd_eval(m: &ArgMatches) -> Result<(), Failure> {
    let run = m.get_one::<PathBuf>("run").expect("required");
    let layer = read_config_file(&run.join(CONFIG_FILE))?;
    let cfg = resolve(&[&layer])?;
    let ck = checkpoint::load(&run.join(CHECKPOINT_FILE), &cfg.train.agent).map_err(|e| Failure::Run(e.to_string()))?;
    let episodes = m.get_one::<usize>("episodes").copied().unwrap_or(cfg.train.eval_episodes);
    if episodes == 0 {
        return Err(Failure::Config("--episodes must be at least 1".into()));
    }
    let seed = *m.get_one::<u64>("seed").expect("default");
    let (success, near) = evaluate(&mut ModePolicy(&ck.agent), &cfg.train.env, episodes, seed)
        .map_err(|e| Failure::Run(e.to_string()))?;
    let doc = serde_json::json!({
        "step": ck.counters.env_steps,
        "episodes": episodes,
        "seed": seed,
        "success_rate": success,
        "time_near_goal": near,
    });
    println!("{}", serde_json::to_string_pretty(&doc).expect("JSON values serialize"));
    Ok(())
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let result = match matches.subcommand() {
        Some(("train", m)) => cmd_train(m).map(|_| true),
        Some(("bench", m)) => cmd_bench(m).map(|_| true),
        Some(("suite", m)) => cmd_suite(m),
        Some(("eval", m)) => cmd_eval(m).map(|_| true),
        _ => unreachable!("a subcommand is required"),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILURE),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
