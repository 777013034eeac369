//! Binary checkpoint container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "GCRL"  u16 version
//! u32 counter count,  then per counter:  u16 name length, name, u64 value
//! u32 array count,    then per array:    u16 name length, name, u32 rows, u32 cols, rows·cols f32
//! ```
//!
//! Arrays hold every parameter and optimizer-moment tensor of the agent;
//! counters hold the trainer progress and the Adam step counts. Loading
//! parses the whole file before building anything, so a damaged file never
//! yields a partially restored agent.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use gcrl_core::adam::AdamState;
use gcrl_core::agent::{AgentConfig, CrlAgent};
use gcrl_core::mlp::MlpParams;
use gcrl_core::trainer::Counters;

pub const MAGIC: &[u8; 4] = b"GCRL";
pub const VERSION: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {VERSION})")]
    Version { found: u16 },
    #[error("checkpoint truncated while reading {what}")]
    Truncated { what: String },
    #[error("tensor `{tensor}` has shape {found:?}, the configuration expects {expected:?}")]
    Shape {
        tensor: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("checkpoint lacks `{0}`")]
    Missing(String),
    #[error("checkpoint has unexpected entry `{0}`")]
    Unexpected(String),
    #[error("checkpoint entry name is not UTF-8")]
    Name,
    #[error("checkpoint does not fit the configuration: {0}")]
    Config(String),
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub agent: CrlAgent<f32>,
    pub counters: Counters,
}

/// Parsed container contents.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub counters: BTreeMap<String, u64>,
    pub arrays: BTreeMap<String, ((usize, usize), Vec<f32>)>,
}

const NETS: [&str; 3] = ["sa_encoder", "goal_encoder", "actor"];

fn nets(agent: &CrlAgent<f32>) -> [(&MlpParams<f32>, &AdamState<f32>); 3] {
    [
        (&agent.sa_encoder, &agent.sa_opt),
        (&agent.goal_encoder, &agent.goal_opt),
        (&agent.actor, &agent.actor_opt),
    ]
}

fn counter_pairs(c: &Counters) -> [(&'static str, u64); 12] {
    [
        ("env_steps", c.env_steps),
        ("transitions", c.transitions),
        ("updates", c.updates),
        ("collect_phases", c.collect_phases),
        ("utd_carry", c.utd_carry),
        ("next_eval", c.next_eval),
        ("evals", c.evals),
        ("last_eval_step", c.last_eval_step),
        ("update_rng_word_lo", c.update_rng_word as u64),
        ("update_rng_word_hi", (c.update_rng_word >> 64) as u64),
        ("eval_rng_word_lo", c.eval_rng_word as u64),
        ("eval_rng_word_hi", (c.eval_rng_word >> 64) as u64),
    ]
}

impl Container {
    pub fn from_agent(agent: &CrlAgent<f32>, counters: &Counters) -> Self {
        let mut out = Container::default();
        for (k, v) in counter_pairs(counters) {
            out.counters.insert(k.to_string(), v);
        }
        for (name, (params, opt)) in NETS.iter().zip(nets(agent)) {
            for slot in params.tensor_slots() {
                let range = slot.offset..slot.offset + slot.len();
                let shape = (slot.rows, slot.cols);
                out.arrays
                    .insert(format!("{name}.{}", slot.name), (shape, params.values()[range.clone()].to_vec()));
                out.arrays
                    .insert(format!("{name}.adam_m.{}", slot.name), (shape, opt.first[range.clone()].to_vec()));
                out.arrays
                    .insert(format!("{name}.adam_v.{}", slot.name), (shape, opt.second[range].to_vec()));
            }
            out.counters.insert(format!("{name}.adam_t"), opt.t);
        }
        out.arrays
            .insert("log_entropy_coef".into(), ((1, 1), vec![agent.log_entropy_coef]));
        out.arrays
            .insert("entropy.adam_m".into(), ((1, 1), agent.entropy_opt.first.clone()));
        out.arrays
            .insert("entropy.adam_v".into(), ((1, 1), agent.entropy_opt.second.clone()));
        out.counters.insert("entropy.adam_t".into(), agent.entropy_opt.t);
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.extend_from_slice(&(self.counters.len() as u32).to_le_bytes());
        for (name, v) in &self.counters {
            put_name(&mut b, name);
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for (name, ((rows, cols), data)) in &self.arrays {
            put_name(&mut b, name);
            b.extend_from_slice(&(*rows as u32).to_le_bytes());
            b.extend_from_slice(&(*cols as u32).to_le_bytes());
            for v in data {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = u16::from_le_bytes(r.array("version")?);
        if version != VERSION {
            return Err(CheckpointError::Version { found: version });
        }
        let mut out = Container::default();
        let n = u32::from_le_bytes(r.array("counter count")?);
        for _ in 0..n {
            let name = r.name()?;
            let v = u64::from_le_bytes(r.array(&name)?);
            if out.counters.insert(name.clone(), v).is_some() {
                return Err(CheckpointError::Unexpected(name));
            }
        }
        let n = u32::from_le_bytes(r.array("array count")?);
        for _ in 0..n {
            let name = r.name()?;
            let rows = u32::from_le_bytes(r.array(&name)?) as usize;
            let cols = u32::from_le_bytes(r.array(&name)?) as usize;
            let len = rows
                .checked_mul(cols)
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| CheckpointError::Truncated { what: name.clone() })?;
            let raw = r.take(len, &name)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if out.arrays.insert(name.clone(), ((rows, cols), data)).is_some() {
                return Err(CheckpointError::Unexpected(name));
            }
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Unexpected("trailing bytes".into()));
        }
        Ok(out)
    }

    /// Rebuilds an agent for `config`, checking every tensor shape.
    pub fn into_checkpoint(mut self, config: &AgentConfig) -> Result<Checkpoint, CheckpointError> {
        let mut agent = CrlAgent::<f32>::new(config.clone(), 0).map_err(|e| CheckpointError::Config(e.to_string()))?;
        {
            let CrlAgent {
                sa_encoder,
                goal_encoder,
                actor,
                sa_opt,
                goal_opt,
                actor_opt,
                ..
            } = &mut agent;
            let targets = [(sa_encoder, sa_opt), (goal_encoder, goal_opt), (actor, actor_opt)];
            for (name, (params, opt)) in NETS.iter().zip(targets) {
                for slot in params.tensor_slots() {
                    let range = slot.offset..slot.offset + slot.len();
                    let shape = (slot.rows, slot.cols);
                    let p = self.take_array(&format!("{name}.{}", slot.name), shape)?;
                    params.values_mut()[range.clone()].copy_from_slice(&p);
                    let m = self.take_array(&format!("{name}.adam_m.{}", slot.name), shape)?;
                    opt.first[range.clone()].copy_from_slice(&m);
                    let v = self.take_array(&format!("{name}.adam_v.{}", slot.name), shape)?;
                    opt.second[range].copy_from_slice(&v);
                }
                opt.t = self.take_counter(&format!("{name}.adam_t"))?;
            }
        }
        agent.log_entropy_coef = self.take_array("log_entropy_coef", (1, 1))?[0];
        agent.entropy_opt.first = self.take_array("entropy.adam_m", (1, 1))?;
        agent.entropy_opt.second = self.take_array("entropy.adam_v", (1, 1))?;
        agent.entropy_opt.t = self.take_counter("entropy.adam_t")?;
        let lo_hi = |lo: u64, hi: u64| (lo as u128) | ((hi as u128) << 64);
        let counters = Counters {
            env_steps: self.take_counter("env_steps")?,
            transitions: self.take_counter("transitions")?,
            updates: self.take_counter("updates")?,
            collect_phases: self.take_counter("collect_phases")?,
            utd_carry: self.take_counter("utd_carry")?,
            next_eval: self.take_counter("next_eval")?,
            evals: self.take_counter("evals")?,
            last_eval_step: self.take_counter("last_eval_step")?,
            update_rng_word: lo_hi(
                self.take_counter("update_rng_word_lo")?,
                self.take_counter("update_rng_word_hi")?,
            ),
            eval_rng_word: lo_hi(self.take_counter("eval_rng_word_lo")?, self.take_counter("eval_rng_word_hi")?),
        };
        if let Some(name) = self.arrays.keys().chain(self.counters.keys()).next() {
            return Err(CheckpointError::Unexpected(name.clone()));
        }
        Ok(Checkpoint { agent, counters })
    }

    fn take_array(&mut self, name: &str, expected: (usize, usize)) -> Result<Vec<f32>, CheckpointError> {
        let (shape, data) = self
            .arrays
            .remove(name)
            .ok_or_else(|| CheckpointError::Missing(name.to_string()))?;
        if shape != expected {
            return Err(CheckpointError::Shape {
                tensor: name.to_string(),
                expected,
                found: shape,
            });
        }
        Ok(data)
    }

    fn take_counter(&mut self, name: &str) -> Result<u64, CheckpointError> {
        self.counters
            .remove(name)
            .ok_or_else(|| CheckpointError::Missing(name.to_string()))
    }
}

fn put_name(b: &mut Vec<u8>, name: &str) {
    b.extend_from_slice(&(name.len() as u16).to_le_bytes());
    b.extend_from_slice(name.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CheckpointError::Truncated { what: what.to_string() })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N], CheckpointError> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn name(&mut self) -> Result<String, CheckpointError> {
        let len = u16::from_le_bytes(self.array("name length")?) as usize;
        let raw = self.take(len, "name")?;
        String::from_utf8(raw.to_vec()).map_err(|_| CheckpointError::Name)
    }
}

pub fn to_bytes(agent: &CrlAgent<f32>, counters: &Counters) -> Vec<u8> {
    Container::from_agent(agent, counters).to_bytes()
}

pub fn from_bytes(bytes: &[u8], config: &AgentConfig) -> Result<Checkpoint, CheckpointError> {
    Container::from_bytes(bytes)?.into_checkpoint(config)
}

/// Writes through a temporary file and a rename, so readers never see a
/// half-written checkpoint.
pub fn save(path: &Path, agent: &CrlAgent<f32>, counters: &Counters) -> Result<(), CheckpointError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&to_bytes(agent, counters))?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path, config: &AgentConfig) -> Result<Checkpoint, CheckpointError> {
    from_bytes(&std::fs::read(path)?, config)
}
