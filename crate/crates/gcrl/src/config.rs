//! Experiment configuration: one flat key table shared by the config file,
//! `GCRL_*` environment variables and `--key value` flags.
//!
//! Precedence, highest first: command-line flag, environment variable,
//! config file, preset default. The preset itself (`paper` or `desk`) is a
//! key like any other and is resolved first.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use gcrl_core::agent::EntropyMode;
use gcrl_core::env::EnvId;
use gcrl_core::mlp::Activation;
use gcrl_core::trainer::TrainConfig;
use gcrl_core::{EnergyKind, LossKind};
use serde_json::{json, Value};

pub const ENV_PREFIX: &str = "GCRL_";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Section {
    Env,
    Agent,
    Trainer,
}

impl Section {
    pub fn name(self) -> &'static str {
        match self {
            Section::Env => "env",
            Section::Agent => "agent",
            Section::Trainer => "trainer",
        }
    }
}

/// Every accepted key with the section it belongs to, in echo order.
pub const KEYS: &[(&str, Section)] = &[
    ("preset", Section::Trainer),
    ("env_id", Section::Env),
    ("episode_length", Section::Env),
    ("action_repeat", Section::Env),
    ("num_timesteps", Section::Trainer),
    ("num_envs", Section::Trainer),
    ("unroll_length", Section::Trainer),
    ("batch_size", Section::Trainer),
    ("utd_denominator", Section::Trainer),
    ("discounting", Section::Trainer),
    ("seed", Section::Trainer),
    ("max_replay_size", Section::Trainer),
    ("min_replay_size", Section::Trainer),
    ("eval_interval", Section::Trainer),
    ("eval_episodes", Section::Trainer),
    ("checkpoint_interval", Section::Trainer),
    ("collect_workers", Section::Trainer),
    ("contrastive_loss_function", Section::Agent),
    ("energy_function", Section::Agent),
    ("logsumexp_penalty", Section::Agent),
    ("hidden_layers", Section::Agent),
    ("representation_dimension", Section::Agent),
    ("layer_norm", Section::Agent),
    ("activation", Section::Agent),
    ("alpha_random", Section::Agent),
    ("policy_lr", Section::Agent),
    ("critic_lr", Section::Agent),
    ("entropy_lr", Section::Agent),
    ("entropy_coef", Section::Agent),
    ("weight_decay", Section::Agent),
];

pub fn section_of(key: &str) -> Option<Section> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, s)| *s)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config key `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Preset {
    /// Full-scale defaults.
    #[default]
    Paper,
    /// Laptop-scale defaults.
    Desk,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Paper => "paper",
            Preset::Desk => "desk",
        }
    }

    pub fn train_config(self, env: EnvId) -> TrainConfig {
        match self {
            Preset::Paper => TrainConfig::paper(env),
            Preset::Desk => TrainConfig::desk(env),
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "paper" | "full" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            _ => Err(format!("unknown preset `{s}` (expected paper or desk)")),
        }
    }
}

/// Resolved configuration of one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub train: TrainConfig,
    /// Env steps between checkpoints; 0 disables them.
    pub checkpoint_interval: u64,
    /// Threads used for collection. Results do not depend on it.
    pub collect_workers: usize,
}

pub const DEFAULT_ENV: EnvId = EnvId::PointMassCircle;

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_preset(Preset::default(), DEFAULT_ENV)
    }
}

/// Raw `key → value` strings from one source.
pub type Layer = BTreeMap<String, String>;

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| ConfigError::new(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_count(key: &str, value: &str) -> Result<u64, ConfigError> {
    let cleaned: String = value.trim().chars().filter(|c| *c != '_').collect();
    if let Ok(v) = cleaned.parse::<u64>() {
        return Ok(v);
    }
    // Accept `5e7` style integers.
    match cleaned.parse::<f64>() {
        Ok(f) if f >= 0.0 && f.fract() == 0.0 && f < 1.8e19 => Ok(f as u64),
        _ => Err(ConfigError::new(key, format!("expected a non-negative integer, got `{value}`"))),
    }
}

fn parse_usize(key: &str, value: &str) -> Result<usize, ConfigError> {
    usize::try_from(parse_count(key, value)?).map_err(|_| ConfigError::new(key, "value too large"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::new(key, format!("expected true or false, got `{value}`"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>, ConfigError> {
    let inner = value.trim().trim_start_matches('[').trim_end_matches(']');
    inner
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse_usize(key, s))
        .collect()
}

impl ExperimentConfig {
    pub fn from_preset(preset: Preset, env: EnvId) -> Self {
        let train = preset.train_config(env);
        Self {
            preset,
            checkpoint_interval: train.eval_interval,
            collect_workers: 1,
            train,
        }
    }

    /// Applies one key. `preset` and `env_id` reset everything else and are
    /// handled by [`resolve`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let t = &mut self.train;
        let a = &mut t.agent;
        match key {
            "preset" | "env_id" => {
                return Err(ConfigError::new(key, "must be resolved before other keys"));
            }
            "episode_length" => {
                t.env.episode_length = u32::try_from(parse_count(key, value)?)
                    .map_err(|_| ConfigError::new(key, "value too large"))?;
            }
            "action_repeat" => t.action_repeat = parse_usize(key, value)?,
            "num_timesteps" => t.num_timesteps = parse_count(key, value)?,
            "num_envs" => t.num_envs = parse_usize(key, value)?,
            "unroll_length" => t.unroll_length = parse_usize(key, value)?,
            "batch_size" => t.batch_size = parse_usize(key, value)?,
            "utd_denominator" => t.utd_denominator = parse_usize(key, value)?,
            "discounting" => t.discounting = parse(key, value)?,
            "seed" => t.seed = parse_count(key, value)?,
            "max_replay_size" => t.max_replay_size = parse_usize(key, value)?,
            "min_replay_size" => t.min_replay_size = parse_usize(key, value)?,
            "eval_interval" => t.eval_interval = parse_count(key, value)?,
            "eval_episodes" => t.eval_episodes = parse_usize(key, value)?,
            "checkpoint_interval" => self.checkpoint_interval = parse_count(key, value)?,
            "collect_workers" => self.collect_workers = parse_usize(key, value)?,
            "contrastive_loss_function" => a.loss = parse::<LossKind>(key, value)?,
            "energy_function" => a.energy = parse::<EnergyKind>(key, value)?,
            "logsumexp_penalty" => a.logsumexp_beta = parse(key, value)?,
            "hidden_layers" => a.hidden = parse_list(key, value)?,
            "representation_dimension" => a.repr_dim = parse_usize(key, value)?,
            "layer_norm" => a.layer_norm = parse_bool(key, value)?,
            "activation" => a.activation = parse::<Activation>(key, value)?,
            "alpha_random" => a.alpha_random = parse(key, value)?,
            "policy_lr" => a.policy_lr = parse(key, value)?,
            "critic_lr" => a.critic_lr = parse(key, value)?,
            "entropy_lr" => a.entropy_lr = parse(key, value)?,
            "entropy_coef" => {
                let v = value.trim();
                a.entropy = if let Some(rest) = v.strip_prefix("auto") {
                    let initial = match rest.trim_start_matches([':', '=']).trim() {
                        "" => 1.0,
                        x => parse(key, x)?,
                    };
                    EntropyMode::Auto { initial }
                } else {
                    EntropyMode::Fixed(parse(key, v)?)
                };
            }
            "weight_decay" => a.weight_decay = parse(key, value)?,
            _ => return Err(ConfigError::new(key, "unknown key")),
        }
        Ok(())
    }

    /// Checks every invariant and names the key responsible for a failure.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = &self.train;
        if t.batch_size < 2 {
            return Err(ConfigError::new(
                "batch_size",
                format!(
                    "contrastive training needs batch_size >= 2 (in-batch negatives), got {}",
                    t.batch_size
                ),
            ));
        }
        let positive = [
            ("num_envs", t.num_envs as u64),
            ("unroll_length", t.unroll_length as u64),
            ("utd_denominator", t.utd_denominator as u64),
            ("eval_interval", t.eval_interval),
            ("eval_episodes", t.eval_episodes as u64),
            ("action_repeat", t.action_repeat as u64),
            ("max_replay_size", t.max_replay_size as u64),
            ("episode_length", t.env.episode_length as u64),
            ("representation_dimension", t.agent.repr_dim as u64),
            ("collect_workers", self.collect_workers as u64),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(ConfigError::new(key, "must be >= 1"));
            }
        }
        if !(0.0..1.0).contains(&t.discounting) {
            return Err(ConfigError::new("discounting", "must lie in [0, 1)"));
        }
        if t.min_replay_size > t.max_replay_size {
            return Err(ConfigError::new("min_replay_size", "must not exceed max_replay_size"));
        }
        if t.agent.hidden.iter().any(|&h| h == 0) {
            return Err(ConfigError::new("hidden_layers", "widths must be positive"));
        }
        if !(0.0..=1.0).contains(&t.agent.alpha_random) {
            return Err(ConfigError::new("alpha_random", "must lie in [0, 1]"));
        }
        if !(t.agent.logsumexp_beta >= 0.0) {
            return Err(ConfigError::new("logsumexp_penalty", "must be >= 0"));
        }
        for (key, lr) in [
            ("policy_lr", t.agent.policy_lr),
            ("critic_lr", t.agent.critic_lr),
            ("entropy_lr", t.agent.entropy_lr),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(ConfigError::new(key, "must be positive"));
            }
        }
        if !(t.agent.weight_decay >= 0.0) {
            return Err(ConfigError::new("weight_decay", "must be >= 0"));
        }
        match t.agent.entropy {
            EntropyMode::Auto { initial } if !(initial > 0.0) => {
                return Err(ConfigError::new("entropy_coef", "auto initial value must be positive"));
            }
            EntropyMode::Fixed(c) if !(c >= 0.0) => {
                return Err(ConfigError::new("entropy_coef", "must be >= 0"));
            }
            _ => {}
        }
        t.validate().map_err(|e| ConfigError::new("config", e.to_string()))
    }

    /// Effective value of every key, typed for JSON.
    pub fn echo(&self) -> Vec<(&'static str, Value)> {
        let t = &self.train;
        let a = &t.agent;
        let entropy = match a.entropy {
            EntropyMode::Auto { initial } if initial == 1.0 => json!("auto"),
            EntropyMode::Auto { initial } => json!(format!("auto:{initial}")),
            EntropyMode::Fixed(c) => json!(c),
        };
        let values = vec![
            json!(self.preset.name()),
            json!(t.env.id.name()),
            json!(t.env.episode_length),
            json!(t.action_repeat),
            json!(t.num_timesteps),
            json!(t.num_envs),
            json!(t.unroll_length),
            json!(t.batch_size),
            json!(t.utd_denominator),
            json!(t.discounting),
            json!(t.seed),
            json!(t.max_replay_size),
            json!(t.min_replay_size),
            json!(t.eval_interval),
            json!(t.eval_episodes),
            json!(self.checkpoint_interval),
            json!(self.collect_workers),
            json!(a.loss.name()),
            json!(a.energy.name()),
            json!(a.logsumexp_beta),
            json!(a.hidden),
            json!(a.repr_dim),
            json!(a.layer_norm),
            json!(a.activation.name()),
            json!(a.alpha_random),
            json!(a.policy_lr),
            json!(a.critic_lr),
            json!(a.entropy_lr),
            entropy,
            json!(a.weight_decay),
        ];
        KEYS.iter().map(|(k, _)| *k).zip(values).collect()
    }

    /// The configuration as a config file that parses back to itself.
    pub fn to_file_text(&self) -> String {
        let echo: BTreeMap<&str, Value> = self.echo().into_iter().collect();
        let mut out = String::new();
        for section in [Section::Env, Section::Agent, Section::Trainer] {
            out.push_str(&format!("[{}]\n", section.name()));
            for (key, s) in KEYS {
                if *s == section {
                    out.push_str(&format!("{key} = {}\n", echo[key]));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Reads a config file: `key = value` lines, optionally grouped under
/// `[env]`, `[agent]` and `[trainer]` headers. Strings may be quoted or bare.
pub fn parse_config_text(text: &str) -> Result<Layer, ConfigError> {
    let mut out = Layer::new();
    let mut section: Option<Section> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = Some(match name.trim() {
                "env" => Section::Env,
                "agent" => Section::Agent,
                "trainer" => Section::Trainer,
                other => {
                    return Err(ConfigError::new(
                        format!("[{other}]"),
                        format!("unknown section on line {}", lineno + 1),
                    ))
                }
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::new(line, format!("line {} is not `key = value`", lineno + 1)))?;
        let key = key.trim();
        let home = section_of(key).ok_or_else(|| ConfigError::new(key, "unknown key"))?;
        if let Some(s) = section {
            // The preset is global; accept it anywhere.
            if s != home && key != "preset" {
                return Err(ConfigError::new(key, format!("belongs to [{}], found in [{}]", home.name(), s.name())));
            }
        }
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(ConfigError::new(key, "given twice in the config file"));
        }
    }
    Ok(out)
}

fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

pub fn read_config_file(path: &Path) -> Result<Layer, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
    parse_config_text(&text)
}

/// Picks the `GCRL_*` variables out of an environment listing.
pub fn env_layer<I, K, V>(vars: I) -> Result<Layer, ConfigError>
where
    I: IntoIterator<Item = (K, V)>,
    K: AsRef<str>,
    V: AsRef<str>,
{
    let mut out = Layer::new();
    for (k, v) in vars {
        let Some(rest) = k.as_ref().strip_prefix(ENV_PREFIX) else {
            continue;
        };
        let key = rest.to_ascii_lowercase();
        if section_of(&key).is_none() {
            return Err(ConfigError::new(k.as_ref(), "unknown key"));
        }
        out.insert(key, v.as_ref().to_string());
    }
    Ok(out)
}

/// Parses `--key value` and `--key=value` pairs.
pub fn flag_layer<S: AsRef<str>>(args: &[S]) -> Result<Layer, ConfigError> {
    let mut out = Layer::new();
    let mut i = 0;
    while i < args.len() {
        let arg = args[i].as_ref();
        let Some(flag) = arg.strip_prefix("--") else {
            return Err(ConfigError::new(arg, "expected a --key flag"));
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = args
                    .get(i + 1)
                    .ok_or_else(|| ConfigError::new(flag, "missing value"))?;
                i += 1;
                (flag.to_string(), v.as_ref().to_string())
            }
        };
        let key = key.replace('-', "_");
        if section_of(&key).is_none() {
            return Err(ConfigError::new(key, "unknown key"));
        }
        out.insert(key, value);
        i += 1;
    }
    Ok(out)
}

/// Merges the layers (lowest precedence first) into a validated config.
pub fn resolve(layers: &[&Layer]) -> Result<ExperimentConfig, ConfigError> {
    let lookup = |key: &str| layers.iter().rev().find_map(|l| l.get(key));
    let preset = match lookup("preset") {
        Some(v) => v.parse::<Preset>().map_err(|e| ConfigError::new("preset", e))?,
        None => Preset::default(),
    };
    let env = match lookup("env_id") {
        Some(v) => parse::<EnvId>("env_id", v)?,
        None => DEFAULT_ENV,
    };
    let mut cfg = ExperimentConfig::from_preset(preset, env);
    let mut explicit_checkpoint = false;
    for layer in layers {
        for (key, value) in layer.iter() {
            if key == "preset" || key == "env_id" {
                continue;
            }
            explicit_checkpoint |= key == "checkpoint_interval";
            cfg.set(key, value)?;
        }
    }
    if !explicit_checkpoint {
        cfg.checkpoint_interval = cfg.train.eval_interval;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Full precedence chain: flags over environment over file over defaults.
pub fn parse_config<S, I, K, V>(flags: &[S], file: Option<&Path>, env: I) -> Result<ExperimentConfig, ConfigError>
where
    S: AsRef<str>,
    I: IntoIterator<Item = (K, V)>,
    K: AsRef<str>,
    V: AsRef<str>,
{
    let file_layer = match file {
        Some(p) => read_config_file(p)?,
        None => Layer::new(),
    };
    let env_layer = env_layer(env)?;
    let flag_layer = flag_layer(flags)?;
    resolve(&[&file_layer, &env_layer, &flag_layer])
}
