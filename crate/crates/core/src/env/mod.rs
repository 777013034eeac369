//! Goal-conditioned point-mass environments.
//!
//! These are small kinematic stand-ins for rigid-body locomotion and
//! manipulation tasks: a double-integrator point moves in the plane, in free
//! space, inside a grid maze, or pushing a puck. They keep the goal
//! semantics (goal distance thresholds, goal samplers, fixed horizons) but are
//! not physics simulations. `FiniteChain` is a discrete line used together
//! with the tabular tools in [`tabular`].
//!
//! State layouts:
//! - point envs: `[x, y, vx, vy]`, goal `[x, y]`
//! - `PointPush`: `[x, y, vx, vy, puck_x, puck_y]`, goal is a puck position
//! - `FiniteChain`: `[index]`, goal `[index]`

pub mod maze;
pub mod tabular;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

// Needed without std on toolchains where core floats lack these methods.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{env_stream, Stream};

pub use maze::Maze;

pub const MAX_STATE_DIM: usize = 6;
pub const MAX_GOAL_DIM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnvId {
    PointReacher,
    PointMassCircle,
    PointUMaze,
    PointBigMaze,
    PointPush,
    FiniteChain,
}

impl EnvId {
    pub const ALL: [EnvId; 6] = [
        EnvId::PointReacher,
        EnvId::PointMassCircle,
        EnvId::PointUMaze,
        EnvId::PointBigMaze,
        EnvId::PointPush,
        EnvId::FiniteChain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnvId::PointReacher => "point_reacher",
            EnvId::PointMassCircle => "point_mass_circle",
            EnvId::PointUMaze => "point_umaze",
            EnvId::PointBigMaze => "point_big_maze",
            EnvId::PointPush => "point_push",
            EnvId::FiniteChain => "finite_chain",
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| *c != '_' && *c != '-')
            .map(|c| c.to_ascii_lowercase())
            .collect();
        EnvId::ALL
            .into_iter()
            .find(|id| id.name().replace('_', "") == key)
            .ok_or_else(|| Error::Invalid(format!("unknown environment `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GoalSampler {
    /// Uniform angle, radius uniform on `[0, max_radius]`.
    Disk { max_radius: f32 },
    /// Uniform angle at a fixed radius.
    Circle { radius: f32 },
    /// Uniform maze goal cell, centre jittered by up to `jitter` cell sizes per axis.
    Cells { jitter: f32 },
    /// Uniform over an axis-aligned box.
    Box { lo: [f32; 2], hi: [f32; 2] },
    /// Uniform chain index.
    ChainIndex,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub id: EnvId,
    pub state_dim: usize,
    pub action_dim: usize,
    pub goal_dim: usize,
    pub goal_distance: f32,
    pub episode_length: u32,
    pub dt: f32,
    pub accel: f32,
    pub max_speed: f32,
    pub sampler: GoalSampler,
    pub maze: Option<Maze>,
    /// Half-width of the square agent body used for maze collisions.
    pub body_half: f32,
    pub termination_on_reach: bool,
    pub chain_len: usize,
    pub agent_radius: f32,
    pub puck_radius: f32,
    pub puck_spawn_lo: [f32; 2],
    pub puck_spawn_hi: [f32; 2],
}

pub const DEFAULT_EPISODE_LENGTH: u32 = 1000;
pub const DEFAULT_CELL_SIZE: f32 = 2.0;

impl EnvSpec {
    pub fn new(id: EnvId) -> Self {
        let mut spec = Self {
            id,
            state_dim: 4,
            action_dim: 2,
            goal_dim: 2,
            goal_distance: 0.5,
            episode_length: DEFAULT_EPISODE_LENGTH,
            dt: 0.05,
            accel: 1.0,
            max_speed: 2.0,
            sampler: GoalSampler::Circle { radius: 5.0 },
            maze: None,
            body_half: 0.1 * DEFAULT_CELL_SIZE,
            termination_on_reach: false,
            chain_len: 8,
            agent_radius: 0.05,
            puck_radius: 0.05,
            puck_spawn_lo: [-0.2, -0.1],
            puck_spawn_hi: [-0.1, 0.1],
        };
        match id {
            EnvId::PointReacher => {
                spec.goal_distance = 0.05;
                spec.sampler = GoalSampler::Disk { max_radius: 0.2 };
            }
            EnvId::PointMassCircle => {}
            EnvId::PointUMaze | EnvId::PointBigMaze => {
                let layout = if id == EnvId::PointUMaze { maze::U_MAZE } else { maze::BIG_MAZE };
                spec.maze = Some(Maze::parse(layout, DEFAULT_CELL_SIZE).expect("built-in maze"));
                spec.sampler = GoalSampler::Cells { jitter: 0.25 };
            }
            EnvId::PointPush => {
                spec.state_dim = 6;
                spec.goal_distance = 0.1;
                spec.sampler = GoalSampler::Box {
                    lo: [-0.55, -0.2],
                    hi: [-0.25, 0.2],
                };
            }
            EnvId::FiniteChain => {
                spec.state_dim = 1;
                spec.action_dim = 1;
                spec.goal_dim = 1;
                spec.sampler = GoalSampler::ChainIndex;
            }
        }
        spec
    }

    pub fn with_episode_length(mut self, episode_length: u32) -> Self {
        self.episode_length = episode_length;
        self
    }

    /// Replaces the maze; the body half-width follows the cell size.
    pub fn with_maze(mut self, maze: Maze) -> Self {
        self.body_half = 0.1 * maze.cell_size();
        self.maze = Some(maze);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Invalid(format!("{}: {what}", self.id)));
        if !(self.goal_distance > 0.0) {
            return bad("goal_distance must be positive");
        }
        if self.episode_length == 0 {
            return bad("episode_length must be positive");
        }
        if self.goal_dim > self.state_dim || self.state_dim > MAX_STATE_DIM || self.goal_dim > MAX_GOAL_DIM {
            return bad("inconsistent dimensions");
        }
        if !(self.dt > 0.0 && self.accel > 0.0 && self.max_speed > 0.0) {
            return bad("dt, accel and max_speed must be positive");
        }
        if matches!(self.sampler, GoalSampler::Cells { .. }) && self.maze.is_none() {
            return bad("cell goal sampler needs a maze");
        }
        if self.id == EnvId::FiniteChain && self.chain_len < 2 {
            return bad("chain needs at least 2 states");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvState {
    pub obs: [f32; MAX_STATE_DIM],
    pub goal: [f32; MAX_GOAL_DIM],
    pub step_index: u32,
    pub done: bool,
}

impl EnvState {
    pub fn observation<'a>(&'a self, spec: &EnvSpec) -> &'a [f32] {
        &self.obs[..spec.state_dim]
    }

    pub fn goal<'a>(&'a self, spec: &EnvSpec) -> &'a [f32] {
        &self.goal[..spec.goal_dim]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub distance_to_goal: f32,
    pub reached: bool,
    pub done: bool,
    pub truncated: bool,
}

/// Goal-space coordinates of an observation: the agent position, or the
/// puck position for `PointPush`.
pub fn goal_of(spec: &EnvSpec, obs: &[f32]) -> [f32; MAX_GOAL_DIM] {
    match spec.id {
        EnvId::PointPush => [obs[4], obs[5]],
        EnvId::FiniteChain => [obs[0], 0.0],
        _ => [obs[0], obs[1]],
    }
}

pub fn distance_to_goal(spec: &EnvSpec, state: &EnvState) -> f32 {
    let g = goal_of(spec, &state.obs);
    let mut sq = 0.0f32;
    for k in 0..spec.goal_dim {
        let d = g[k] - state.goal[k];
        sq += d * d;
    }
    sq.sqrt()
}

fn sample_goal<R: Rng + ?Sized>(spec: &EnvSpec, rng: &mut R) -> [f32; MAX_GOAL_DIM] {
    match spec.sampler {
        GoalSampler::Disk { max_radius } => {
            let r = rng.random_range(0.0..=max_radius);
            let theta = rng.random_range(0.0..core::f32::consts::TAU);
            [r * theta.cos(), r * theta.sin()]
        }
        GoalSampler::Circle { radius } => {
            let theta = rng.random_range(0.0..core::f32::consts::TAU);
            [radius * theta.cos(), radius * theta.sin()]
        }
        GoalSampler::Cells { jitter } => {
            let maze = spec.maze.as_ref().expect("validated spec");
            let cells = maze.goal_cells();
            let (r, c) = cells[rng.random_range(0..cells.len())];
            let [x, y] = maze.cell_center(r, c);
            let j = jitter * maze.cell_size();
            [x + rng.random_range(-j..=j), y + rng.random_range(-j..=j)]
        }
        GoalSampler::Box { lo, hi } => [rng.random_range(lo[0]..=hi[0]), rng.random_range(lo[1]..=hi[1])],
        GoalSampler::ChainIndex => [rng.random_range(0..spec.chain_len) as f32, 0.0],
    }
}

/// Fresh episode: initial physical state plus a newly sampled goal.
pub fn reset<R: Rng + ?Sized>(spec: &EnvSpec, rng: &mut R) -> EnvState {
    let mut obs = [0.0; MAX_STATE_DIM];
    if spec.id == EnvId::PointPush {
        obs[4] = rng.random_range(spec.puck_spawn_lo[0]..=spec.puck_spawn_hi[0]);
        obs[5] = rng.random_range(spec.puck_spawn_lo[1]..=spec.puck_spawn_hi[1]);
    }
    EnvState {
        obs,
        goal: sample_goal(spec, rng),
        step_index: 0,
        done: false,
    }
}

/// One deterministic transition. Actions are clamped to `[-1, 1]`.
pub fn step(spec: &EnvSpec, state: &EnvState, action: &[f32]) -> Result<(EnvState, StepOutcome)> {
    if state.done {
        return Err(Error::EpisodeOver);
    }
    if action.len() != spec.action_dim {
        return Err(Error::Length {
            op: "env_step",
            expected: spec.action_dim,
            found: action.len(),
        });
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite(String::from("action")));
    }
    let mut next = *state;
    let a = |k: usize| action[k].clamp(-1.0, 1.0);
    if spec.id == EnvId::FiniteChain {
        let idx = next.obs[0] as i64;
        let moved = if a(0) > 0.33 {
            idx + 1
        } else if a(0) < -0.33 {
            idx - 1
        } else {
            idx
        };
        next.obs[0] = moved.clamp(0, spec.chain_len as i64 - 1) as f32;
    } else {
        let pos = [state.obs[0], state.obs[1]];
        let vel = [state.obs[2], state.obs[3]];
        let delta = [vel[0] * spec.dt, vel[1] * spec.dt];
        let new_pos = match &spec.maze {
            Some(m) => m.resolve_move(pos, delta, spec.body_half),
            None => [pos[0] + delta[0], pos[1] + delta[1]],
        };
        let mut v = [vel[0] + a(0) * spec.accel * spec.dt, vel[1] + a(1) * spec.accel * spec.dt];
        let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
        if speed > spec.max_speed {
            let s = spec.max_speed / speed;
            v = [v[0] * s, v[1] * s];
        }
        if let Some(m) = &spec.maze {
            let c = m.contact(new_pos, spec.body_half);
            if (c.pos_x && v[0] > 0.0) || (c.neg_x && v[0] < 0.0) {
                v[0] = 0.0;
            }
            if (c.pos_y && v[1] > 0.0) || (c.neg_y && v[1] < 0.0) {
                v[1] = 0.0;
            }
        }
        next.obs[..4].copy_from_slice(&[new_pos[0], new_pos[1], v[0], v[1]]);
        if spec.id == EnvId::PointPush {
            let reach = spec.agent_radius + spec.puck_radius;
            let (dx, dy) = (next.obs[4] - new_pos[0], next.obs[5] - new_pos[1]);
            let dist = (dx * dx + dy * dy).sqrt();
            if dist < reach {
                // Put the puck tangent to the agent along the line of centres.
                let (ux, uy) = if dist > 0.0 { (dx / dist, dy / dist) } else { (1.0, 0.0) };
                next.obs[4] = new_pos[0] + ux * reach;
                next.obs[5] = new_pos[1] + uy * reach;
            }
        }
    }
    next.step_index += 1;
    let distance = distance_to_goal(spec, &next);
    let reached = distance < spec.goal_distance;
    let truncated = next.step_index >= spec.episode_length;
    let done = truncated || (spec.termination_on_reach && reached);
    next.done = done;
    Ok((
        next,
        StepOutcome {
            distance_to_goal: distance,
            reached,
            done,
            truncated,
        },
    ))
}

/// One environment of a vector: its state, its private random stream and a
/// count of completed resets.
#[derive(Clone, Debug)]
pub struct EnvSlot {
    pub state: EnvState,
    pub rng: Stream,
    pub episode: u64,
}

impl EnvSlot {
    pub fn new(spec: &EnvSpec, seed: u64, index: usize) -> Self {
        let mut rng = env_stream(seed, index);
        let state = reset(spec, &mut rng);
        Self { state, rng, episode: 0 }
    }

    pub fn reset(&mut self, spec: &EnvSpec) {
        self.state = reset(spec, &mut self.rng);
        self.episode += 1;
    }

    pub fn step(&mut self, spec: &EnvSpec, action: &[f32]) -> Result<StepOutcome> {
        let (next, out) = step(spec, &self.state, action)?;
        self.state = next;
        Ok(out)
    }
}

/// A homogeneous vector of environments. Slot `i` draws from stream `i` of
/// the master seed, so any partition of the slots across workers gives the
/// same results.
#[derive(Clone, Debug)]
pub struct VecEnv {
    spec: EnvSpec,
    slots: Vec<EnvSlot>,
}

impl VecEnv {
    pub fn new(spec: EnvSpec, num_envs: usize, seed: u64) -> Result<Self> {
        spec.validate()?;
        if num_envs == 0 {
            return Err(Error::Invalid(String::from("need at least one environment")));
        }
        let slots = (0..num_envs).map(|i| EnvSlot::new(&spec, seed, i)).collect();
        Ok(Self { spec, slots })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[EnvSlot] {
        &self.slots
    }

    pub fn slots_mut(&mut self) -> &mut [EnvSlot] {
        &mut self.slots
    }

    /// Spec and slots borrowed together, for sharding.
    pub fn parts_mut(&mut self) -> (&EnvSpec, &mut [EnvSlot]) {
        (&self.spec, &mut self.slots)
    }

    /// Steps every slot with the matching row of `actions`.
    pub fn step(&mut self, actions: &Matrix<f32>) -> Result<Vec<StepOutcome>> {
        if actions.shape() != (self.slots.len(), self.spec.action_dim) {
            return Err(Error::Shape {
                op: "vec_step",
                lhs: actions.shape(),
                rhs: (self.slots.len(), self.spec.action_dim),
            });
        }
        let spec = &self.spec;
        self.slots
            .iter_mut()
            .enumerate()
            .map(|(i, slot)| slot.step(spec, actions.row(i)))
            .collect()
    }

    /// Resets every slot whose episode has ended.
    pub fn reset_done(&mut self) {
        let spec = &self.spec;
        for slot in self.slots.iter_mut().filter(|s| s.state.done) {
            slot.reset(spec);
        }
    }
}
