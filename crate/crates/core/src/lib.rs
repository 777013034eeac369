//! Contrastive goal-conditioned reinforcement learning without `std`.
//!
//! Everything numeric lives here: dense kernels and a small MLP with manual
//! reverse-mode gradients, the critic energy functions, the contrastive
//! objectives, point-mass environments, the trajectory replay buffer, the
//! actor-critic agent and the collect/update training loop. The crate only
//! needs `alloc`; IO, timing, threads and file formats live in the companion
//! `gcrl` crate.

#![cfg_attr(not(test), no_std)]
// Float methods come from num-traits without std and are inherent with it.
#![cfg_attr(test, allow(unused_imports))]

extern crate alloc;

pub mod adam;
pub mod agent;
pub mod energy;
pub mod env;
pub mod error;
pub mod gradcheck;
pub mod matrix;
pub mod mlp;
pub mod objective;
pub mod real;
pub mod replay;
pub mod rng;
pub mod stats;
pub mod trainer;

pub use adam::{AdamHyper, AdamState};
pub use agent::{AgentConfig, CrlAgent, EntropyMode, UpdateStats};
pub use energy::EnergyKind;
pub use env::{EnvId, EnvSpec, EnvState, StepOutcome, VecEnv};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use mlp::{Activation, MlpConfig, MlpParams};
pub use objective::LossKind;
pub use real::Real;
pub use replay::{CrlBatch, TrajectoryBuffer, Transition};
pub use trainer::{EvalReport, TrainConfig, Trainer};
