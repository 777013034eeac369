//! The collect/update loop, evaluation and step accounting.
//!
//! Training alternates two phases. A collect phase advances every
//! environment `unroll_length` steps and appends the transitions to the
//! replay buffer; an update phase then runs one gradient update per
//! `utd_denominator` transitions written (the remainder carries over to the
//! next phase, so the total is exactly `floor(transitions / utd)`). Before
//! the first update the buffer is prefilled with uniformly random actions.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::agent::{AgentConfig, CrlAgent, UpdateStats};
use crate::env::{EnvId, EnvSlot, EnvSpec, EnvState, VecEnv};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::replay::{TrajectoryBuffer, Transition};
use crate::rng::{standard_normal, stream, Stream, EVAL_STREAM, UPDATE_STREAM};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub num_timesteps: u64,
    pub num_envs: usize,
    pub unroll_length: usize,
    pub batch_size: usize,
    /// Transitions written per gradient update.
    pub utd_denominator: usize,
    pub discounting: f64,
    pub seed: u64,
    /// Env steps between evaluations.
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub max_replay_size: usize,
    pub min_replay_size: usize,
    pub action_repeat: usize,
    pub env: EnvSpec,
    pub agent: AgentConfig,
}

impl TrainConfig {
    /// Full-scale defaults: 1024 environments, 50M steps, 256-wide networks.
    pub fn paper(id: EnvId) -> Self {
        let env = EnvSpec::new(id);
        Self {
            num_timesteps: 50_000_000,
            num_envs: 1024,
            unroll_length: 62,
            batch_size: 256,
            utd_denominator: 16,
            discounting: 0.99,
            seed: 0,
            eval_interval: 1_000_000,
            eval_episodes: 128,
            max_replay_size: 10_000,
            min_replay_size: 1_000,
            action_repeat: 1,
            agent: AgentConfig::for_env(&env),
            env,
        }
    }

    /// Laptop-sized defaults: 64 environments, 256-step episodes, small networks.
    pub fn desk(id: EnvId) -> Self {
        let mut c = Self::paper(id);
        c.env.episode_length = 256;
        c.num_envs = 64;
        c.num_timesteps = 2_000_000;
        c.min_replay_size = 256;
        c.eval_interval = 100_000;
        c.eval_episodes = 64;
        c.agent.hidden = vec![64, 64];
        c.agent.repr_dim = 16;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Invalid(m.to_string()));
        if self.num_envs == 0 {
            return fail("num_envs must be >= 1");
        }
        if self.unroll_length == 0 {
            return fail("unroll_length must be >= 1");
        }
        if self.batch_size < 2 {
            return Err(Error::BatchTooSmall(self.batch_size));
        }
        if self.utd_denominator == 0 {
            return fail("utd_denominator must be >= 1");
        }
        if !(0.0..1.0).contains(&self.discounting) {
            return fail("discounting must lie in [0, 1)");
        }
        if self.eval_interval == 0 || self.eval_episodes == 0 {
            return fail("eval_interval and eval_episodes must be >= 1");
        }
        if self.action_repeat == 0 {
            return fail("action_repeat must be >= 1");
        }
        if self.max_replay_size == 0 || self.min_replay_size > self.max_replay_size {
            return fail("need 0 < max_replay_size and min_replay_size <= max_replay_size");
        }
        self.env.validate()?;
        self.agent.validate()?;
        if (self.agent.state_dim, self.agent.action_dim, self.agent.goal_dim)
            != (self.env.state_dim, self.env.action_dim, self.env.goal_dim)
        {
            return fail("agent dimensions do not match the environment");
        }
        Ok(())
    }

    /// Env steps written by one collect phase.
    pub fn steps_per_phase(&self) -> u64 {
        (self.num_envs * self.unroll_length * self.action_repeat) as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CollectPolicy {
    /// Uniform actions in `[-1, 1]`.
    Random,
    /// Stochastic actor samples.
    Actor,
}

/// Transitions produced by one environment during a collect phase.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnvRollout {
    pub states: Vec<f32>,
    pub actions: Vec<f32>,
    pub next_states: Vec<f32>,
    pub done: Vec<bool>,
    pub truncated: Vec<bool>,
    pub episodes: Vec<u64>,
    pub finished_episodes: u64,
    pub successful_episodes: u64,
    /// Whether the current episode has reached its goal so far.
    pub reached_in_episode: bool,
}

impl EnvRollout {
    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }
}

/// Advances a contiguous group of environment slots by `unroll` steps.
///
/// Each slot draws its action noise and resets from its own stream and the
/// actor is row-independent, so the result for a slot does not depend on
/// which other slots share the call.
pub fn collect_shard(
    agent: &CrlAgent<f32>,
    spec: &EnvSpec,
    slots: &mut [EnvSlot],
    unroll: usize,
    policy: CollectPolicy,
    action_repeat: usize,
) -> Result<Vec<EnvRollout>> {
    let n = slots.len();
    let (sd, ad, gd) = (spec.state_dim, spec.action_dim, spec.goal_dim);
    let mut out: Vec<EnvRollout> = (0..n)
        .map(|_| EnvRollout {
            states: Vec::with_capacity(unroll * sd),
            actions: Vec::with_capacity(unroll * ad),
            next_states: Vec::with_capacity(unroll * sd),
            ..EnvRollout::default()
        })
        .collect();
    let mut states = Matrix::zeros(n, sd);
    let mut goals = Matrix::zeros(n, gd);
    let mut noise = Matrix::zeros(n, ad);
    for _ in 0..unroll {
        let actions = match policy {
            CollectPolicy::Random => {
                Matrix::from_fn(n, ad, |i, _| slots[i].rng.random_range(-1.0f32..=1.0))
            }
            CollectPolicy::Actor => {
                for (i, slot) in slots.iter_mut().enumerate() {
                    states.row_mut(i).copy_from_slice(slot.state.observation(spec));
                    goals.row_mut(i).copy_from_slice(slot.state.goal(spec));
                    for v in noise.row_mut(i) {
                        *v = standard_normal(&mut slot.rng);
                    }
                }
                agent.actor_sample_with_noise(&states, &goals, &noise)?.actions
            }
        };
        for (i, slot) in slots.iter_mut().enumerate() {
            let log = &mut out[i];
            log.states.extend_from_slice(slot.state.observation(spec));
            log.actions.extend_from_slice(actions.row(i));
            log.episodes.push(slot.episode);
            let mut outcome = slot.step(spec, actions.row(i))?;
            log.reached_in_episode |= outcome.reached;
            for _ in 1..action_repeat {
                if outcome.done {
                    break;
                }
                outcome = slot.step(spec, actions.row(i))?;
                log.reached_in_episode |= outcome.reached;
            }
            log.next_states.extend_from_slice(slot.state.observation(spec));
            log.done.push(outcome.done && !outcome.truncated);
            log.truncated.push(outcome.truncated);
            if outcome.done {
                log.finished_episodes += 1;
                log.successful_episodes += log.reached_in_episode as u64;
                log.reached_in_episode = false;
                slot.reset(spec);
            }
        }
    }
    Ok(out)
}

/// Runs [`collect_shard`] over all slots; implementations may split the
/// slots across workers but must return rollouts in slot order.
pub trait CollectExecutor {
    fn collect(
        &self,
        agent: &CrlAgent<f32>,
        spec: &EnvSpec,
        slots: &mut [EnvSlot],
        unroll: usize,
        policy: CollectPolicy,
        action_repeat: usize,
    ) -> Result<Vec<EnvRollout>>;
}

/// Single-threaded executor.
#[derive(Clone, Copy, Debug, Default)]
pub struct Serial;

impl CollectExecutor for Serial {
    fn collect(
        &self,
        agent: &CrlAgent<f32>,
        spec: &EnvSpec,
        slots: &mut [EnvSlot],
        unroll: usize,
        policy: CollectPolicy,
        action_repeat: usize,
    ) -> Result<Vec<EnvRollout>> {
        collect_shard(agent, spec, slots, unroll, policy, action_repeat)
    }
}

/// Source of wall-clock time in seconds; only used for throughput figures.
pub trait Clock {
    fn now_seconds(&self) -> f64;
}

/// Clock that never advances.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn now_seconds(&self) -> f64 {
        0.0
    }
}

/// Chooses actions for evaluation. States are mutable so scripted test
/// policies can manipulate the episode directly.
pub trait EvalPolicy {
    fn act_batch(&mut self, spec: &EnvSpec, states: &mut [EnvState], actions: &mut Matrix<f32>) -> Result<()>;
}

/// Deterministic `tanh(μ)` actions of an agent.
pub struct ModePolicy<'a>(pub &'a CrlAgent<f32>);

impl EvalPolicy for ModePolicy<'_> {
    fn act_batch(&mut self, spec: &EnvSpec, states: &mut [EnvState], actions: &mut Matrix<f32>) -> Result<()> {
        let n = states.len();
        let s = Matrix::from_fn(n, spec.state_dim, |i, k| states[i].obs[k]);
        let g = Matrix::from_fn(n, spec.goal_dim, |i, k| states[i].goal[k]);
        *actions = self.0.actor_mode(&s, &g)?;
        Ok(())
    }
}

/// Uniformly random actions.
pub struct RandomPolicy(pub Stream);

impl EvalPolicy for RandomPolicy {
    fn act_batch(&mut self, _spec: &EnvSpec, _states: &mut [EnvState], actions: &mut Matrix<f32>) -> Result<()> {
        for v in actions.data_mut() {
            *v = self.0.random_range(-1.0f32..=1.0);
        }
        Ok(())
    }
}

/// Success (goal reached at least once) and fraction of steps within the
/// goal distance, averaged over `n_episodes` parallel episodes. Episodes that
/// terminate early count their remaining steps as not near the goal.
pub fn evaluate<P: EvalPolicy + ?Sized>(policy: &mut P, spec: &EnvSpec, n_episodes: usize, seed: u64) -> Result<(f64, f64)> {
    if n_episodes == 0 {
        return Err(Error::Invalid("evaluation needs at least one episode".into()));
    }
    let mut envs = VecEnv::new(spec.clone(), n_episodes, seed)?;
    let mut reached = vec![false; n_episodes];
    let mut near = vec![0u32; n_episodes];
    let mut states: Vec<EnvState> = envs.slots().iter().map(|s| s.state).collect();
    let mut actions = Matrix::zeros(n_episodes, spec.action_dim);
    for _ in 0..spec.episode_length {
        if states.iter().all(|s| s.done) {
            break;
        }
        policy.act_batch(spec, &mut states, &mut actions)?;
        for (i, slot) in envs.slots_mut().iter_mut().enumerate() {
            slot.state = states[i];
            if slot.state.done {
                continue;
            }
            let out = slot.step(spec, actions.row(i))?;
            reached[i] |= out.reached;
            near[i] += out.reached as u32;
            states[i] = slot.state;
        }
    }
    let n = n_episodes as f64;
    let success = reached.iter().filter(|&&r| r).count() as f64 / n;
    let time_near = near.iter().map(|&k| k as f64 / spec.episode_length as f64).sum::<f64>() / n;
    Ok((success, time_near))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub step: u64,
    pub wall_clock_seconds: f64,
    pub success_rate: f64,
    pub time_near_goal: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub entropy_coef: f64,
    pub steps_per_second: f64,
    pub updates: u64,
}

/// Progress counters; together with the agent they are what a checkpoint
/// stores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counters {
    pub env_steps: u64,
    pub transitions: u64,
    pub updates: u64,
    pub collect_phases: u64,
    /// Transitions not yet consumed by an update.
    pub utd_carry: u64,
    pub next_eval: u64,
    pub evals: u64,
    /// Env step of the latest evaluation; 0 before the first.
    pub last_eval_step: u64,
    pub update_rng_word: u128,
    pub eval_rng_word: u128,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

pub struct Trainer<E: CollectExecutor = Serial> {
    config: TrainConfig,
    agent: CrlAgent<f32>,
    envs: VecEnv,
    buffer: TrajectoryBuffer,
    update_rng: Stream,
    eval_rng: Stream,
    counters: Counters,
    executor: E,
    clock: Box<dyn Clock>,
    stats_sum: UpdateStats,
    stats_count: u64,
    last_report: (f64, u64),
    start_seconds: f64,
}

impl Trainer<Serial> {
    pub fn new(config: TrainConfig) -> Result<Self> {
        Self::with_executor(config, Serial)
    }
}

impl<E: CollectExecutor> Trainer<E> {
    pub fn with_executor(config: TrainConfig, executor: E) -> Result<Self> {
        config.validate()?;
        let agent = CrlAgent::new(config.agent.clone(), config.seed)?;
        let counters = Counters {
            next_eval: config.eval_interval,
            ..Counters::default()
        };
        Self::from_parts(config, agent, counters, executor)
    }

    /// Rebuilds a trainer around a restored agent and counters. Environments
    /// and the replay buffer start fresh (and are prefilled again).
    pub fn from_parts(config: TrainConfig, agent: CrlAgent<f32>, counters: Counters, executor: E) -> Result<Self> {
        config.validate()?;
        if agent.config() != &config.agent {
            return Err(Error::Invalid("agent configuration differs from the training configuration".into()));
        }
        // A resumed run must not replay the same environment streams.
        let env_seed = config.seed.wrapping_add(counters.env_steps.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let envs = VecEnv::new(config.env.clone(), config.num_envs, env_seed)?;
        let buffer = TrajectoryBuffer::new(&config.env, config.num_envs, config.max_replay_size, config.min_replay_size)?;
        let mut update_rng = stream(config.seed, UPDATE_STREAM);
        update_rng.set_word_pos(counters.update_rng_word);
        let mut eval_rng = stream(config.seed, EVAL_STREAM);
        eval_rng.set_word_pos(counters.eval_rng_word);
        Ok(Self {
            config,
            agent,
            envs,
            buffer,
            update_rng,
            eval_rng,
            counters,
            executor,
            clock: Box::new(NullClock),
            stats_sum: UpdateStats::default(),
            stats_count: 0,
            last_report: (0.0, counters.env_steps),
            start_seconds: 0.0,
        })
    }

    pub fn with_clock(mut self, clock: Box<dyn Clock>) -> Self {
        let now = clock.now_seconds();
        self.start_seconds = now;
        self.last_report = (now, self.counters.env_steps);
        self.clock = clock;
        self
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn agent(&self) -> &CrlAgent<f32> {
        &self.agent
    }

    pub fn buffer(&self) -> &TrajectoryBuffer {
        &self.buffer
    }

    pub fn envs(&self) -> &VecEnv {
        &self.envs
    }

    /// Counters with the random stream positions brought up to date.
    pub fn counters(&self) -> Counters {
        Counters {
            update_rng_word: self.update_rng.get_word_pos(),
            eval_rng_word: self.eval_rng.get_word_pos(),
            ..self.counters
        }
    }

    /// One collect phase; returns the number of transitions written.
    pub fn collect(&mut self, policy: CollectPolicy) -> Result<usize> {
        let unroll = self.config.unroll_length;
        let repeat = self.config.action_repeat;
        let (spec, slots) = self.envs.parts_mut();
        let rollouts = self.executor.collect(&self.agent, spec, slots, unroll, policy, repeat)?;
        if rollouts.len() != self.config.num_envs {
            return Err(Error::Length {
                op: "collect",
                expected: self.config.num_envs,
                found: rollouts.len(),
            });
        }
        let (sd, ad) = (self.config.env.state_dim, self.config.env.action_dim);
        let mut written = 0;
        for (env, r) in rollouts.iter().enumerate() {
            for t in 0..r.len() {
                self.buffer.push(
                    env,
                    &Transition {
                        state: &r.states[t * sd..(t + 1) * sd],
                        action: &r.actions[t * ad..(t + 1) * ad],
                        next_state: &r.next_states[t * sd..(t + 1) * sd],
                        done: r.done[t],
                        truncated: r.truncated[t],
                        episode: r.episodes[t],
                    },
                )?;
                written += 1;
            }
        }
        self.counters.collect_phases += 1;
        self.counters.transitions += written as u64;
        self.counters.env_steps += (written * repeat) as u64;
        Ok(written)
    }

    /// Random-action collection until every environment holds
    /// `min_replay_size` transitions.
    pub fn prefill(&mut self) -> Result<()> {
        while (0..self.config.num_envs).any(|e| self.buffer.len(e) < self.config.min_replay_size) {
            self.collect(CollectPolicy::Random)?;
        }
        Ok(())
    }

    /// Gradient updates owed for `written` new transitions.
    pub fn run_updates(&mut self, written: usize) -> Result<u64> {
        let total = self.counters.utd_carry + written as u64;
        let utd = self.config.utd_denominator as u64;
        let n = total / utd;
        self.counters.utd_carry = total % utd;
        for _ in 0..n {
            let step = self.counters.env_steps;
            let diverged = |e: Error| Error::Diverged {
                step,
                detail: e.to_string(),
            };
            let batch = self.buffer.sample_crl_batch::<f32, _>(
                &mut self.update_rng,
                self.config.batch_size,
                self.config.discounting,
                self.config.agent.alpha_random,
            )?;
            let stats = self.agent.update(&batch, &mut self.update_rng).map_err(diverged)?;
            if !stats.is_finite() {
                return Err(diverged(Error::NonFinite(format!("{stats:?}"))));
            }
            self.stats_sum.critic_loss += stats.critic_loss;
            self.stats_sum.actor_loss += stats.actor_loss;
            self.stats_sum.entropy_coef = stats.entropy_coef;
            self.stats_count += 1;
            self.counters.updates += 1;
        }
        Ok(n)
    }

    /// Evaluates the current actor on fresh goals.
    pub fn evaluate_now(&mut self) -> Result<EvalReport> {
        let seed = self.eval_rng.next_u64();
        let (success, near) = evaluate(&mut ModePolicy(&self.agent), &self.config.env, self.config.eval_episodes, seed)?;
        let now = self.clock.now_seconds();
        let (t0, s0) = self.last_report;
        let dt = now - t0;
        let steps = self.counters.env_steps - s0;
        let sps = if dt > 0.0 { steps as f64 / dt } else { 0.0 };
        let c = self.stats_count.max(1) as f64;
        let report = EvalReport {
            step: self.counters.env_steps,
            wall_clock_seconds: now - self.start_seconds,
            success_rate: success,
            time_near_goal: near,
            critic_loss: self.stats_sum.critic_loss / c,
            actor_loss: self.stats_sum.actor_loss / c,
            entropy_coef: if self.stats_count > 0 {
                self.stats_sum.entropy_coef
            } else {
                self.agent.entropy_coef() as f64
            },
            steps_per_second: sps,
            updates: self.counters.updates,
        };
        self.stats_sum = UpdateStats::default();
        self.stats_count = 0;
        self.last_report = (now, self.counters.env_steps);
        self.counters.evals += 1;
        self.counters.last_eval_step = self.counters.env_steps;
        Ok(report)
    }

    /// Trains up to the next evaluation and returns its report, or `None`
    /// once `num_timesteps` is reached and the final state has been
    /// evaluated. Reports come every `eval_interval` env steps and at the end.
    pub fn next_report(&mut self) -> Result<Option<EvalReport>> {
        self.prefill()?;
        while self.counters.env_steps < self.config.num_timesteps {
            let written = self.collect(CollectPolicy::Actor)?;
            self.run_updates(written)?;
            if self.counters.env_steps >= self.counters.next_eval {
                while self.counters.next_eval <= self.counters.env_steps {
                    self.counters.next_eval += self.config.eval_interval;
                }
                return self.evaluate_now().map(Some);
            }
        }
        if self.counters.last_eval_step != self.counters.env_steps {
            return self.evaluate_now().map(Some);
        }
        Ok(None)
    }

    /// Calls [`Self::next_report`] until training ends or `on_report` asks
    /// to stop.
    pub fn run(&mut self, mut on_report: impl FnMut(&EvalReport) -> Control) -> Result<Vec<EvalReport>> {
        let mut reports = Vec::new();
        while let Some(r) = self.next_report()? {
            reports.push(r);
            if on_report(&r) == Control::Stop {
                break;
            }
        }
        Ok(reports)
    }
}

/// Runs a full training job with the serial executor.
pub fn train(config: TrainConfig) -> Result<Vec<EvalReport>> {
    Trainer::new(config)?.run(|_| Control::Continue)
}
