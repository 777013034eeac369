//! The contrastive actor-critic.
//!
//! The critic is `f(s, a, g) = energy(φ(s, a), ψ(g))` with two separate
//! encoders trained by a contrastive objective on in-batch negatives. The
//! actor is a tanh-squashed Gaussian conditioned on `(s, g)` and trained to
//! maximize the critic with an entropy bonus whose coefficient adapts
//! towards a target entropy of `−action_dim`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use crate::adam::{AdamHyper, AdamState};
use crate::energy::{energy_backward, energy_matrix, energy_pairs, energy_pairs_backward, EnergyKind};
use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::mlp::{Activation, MlpConfig, MlpParams};
use crate::objective::{critic_loss, logsumexp_penalty, LossKind};
use crate::real::Real;
use crate::replay::CrlBatch;
use crate::rng::{standard_normal, stream, INIT_STREAM};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Added inside the log of the tanh Jacobian.
pub const TANH_EPS: f64 = 1e-6;
/// Scale of the actor's initial output layer.
pub const ACTOR_OUTPUT_SCALE: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EntropyMode {
    /// Learned coefficient starting at `initial`.
    Auto { initial: f64 },
    /// Constant coefficient.
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    pub state_dim: usize,
    pub action_dim: usize,
    pub goal_dim: usize,
    pub repr_dim: usize,
    pub hidden: Vec<usize>,
    pub layer_norm: bool,
    pub activation: Activation,
    pub energy: EnergyKind,
    pub loss: LossKind,
    pub logsumexp_beta: f64,
    pub alpha_random: f64,
    pub critic_lr: f64,
    pub policy_lr: f64,
    pub entropy_lr: f64,
    /// Decoupled weight decay on the encoders.
    pub weight_decay: f64,
    pub entropy: EntropyMode,
}

impl AgentConfig {
    pub fn for_env(spec: &EnvSpec) -> Self {
        Self {
            state_dim: spec.state_dim,
            action_dim: spec.action_dim,
            goal_dim: spec.goal_dim,
            repr_dim: 64,
            hidden: vec![256, 256],
            layer_norm: false,
            activation: Activation::Silu,
            energy: EnergyKind::L2,
            loss: LossKind::InfoNceSym,
            logsumexp_beta: 0.1,
            alpha_random: 0.0,
            critic_lr: 3e-4,
            policy_lr: 6e-4,
            entropy_lr: 3e-4,
            weight_decay: 0.0,
            entropy: EntropyMode::Auto { initial: 1.0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Invalid(format!("agent: {m}")));
        if self.repr_dim == 0 || self.state_dim == 0 || self.action_dim == 0 || self.goal_dim == 0 {
            return fail("dimensions must be positive");
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return fail("hidden widths must be positive");
        }
        if !(0.0..=1.0).contains(&self.alpha_random) {
            return fail("alpha_random must lie in [0, 1]");
        }
        if self.logsumexp_beta < 0.0 {
            return fail("logsumexp penalty must be >= 0");
        }
        let coef_ok = match self.entropy {
            EntropyMode::Auto { initial } => initial > 0.0,
            EntropyMode::Fixed(c) => c >= 0.0,
        };
        if !coef_ok {
            return fail("entropy coefficient must be positive");
        }
        for (name, lr) in [("critic_lr", self.critic_lr), ("policy_lr", self.policy_lr), ("entropy_lr", self.entropy_lr)] {
            if !(lr > 0.0) {
                return fail(&format!("{name} must be positive"));
            }
        }
        if self.weight_decay < 0.0 {
            return fail("weight_decay must be >= 0");
        }
        Ok(())
    }

    fn mlp(&self, input: usize, output: usize) -> MlpConfig {
        MlpConfig {
            activation: self.activation,
            ..MlpConfig::new(input, &self.hidden, output).with_layer_norm(self.layer_norm)
        }
    }

    pub fn sa_encoder_config(&self) -> MlpConfig {
        self.mlp(self.state_dim + self.action_dim, self.repr_dim)
    }

    pub fn goal_encoder_config(&self) -> MlpConfig {
        self.mlp(self.goal_dim, self.repr_dim)
    }

    pub fn actor_config(&self) -> MlpConfig {
        self.mlp(self.state_dim + self.goal_dim, 2 * self.action_dim)
    }

    fn critic_hyper(&self) -> AdamHyper {
        AdamHyper {
            weight_decay: self.weight_decay,
            ..AdamHyper::with_lr(self.critic_lr)
        }
    }
}

/// Diagnostics of one update; fields not touched by a step stay zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub penalty: f64,
    pub actor_loss: f64,
    pub entropy: f64,
    pub entropy_coef: f64,
    pub logits_diag: f64,
    pub logits_offdiag: f64,
}

impl UpdateStats {
    pub fn is_finite(&self) -> bool {
        [
            self.critic_loss,
            self.penalty,
            self.actor_loss,
            self.entropy,
            self.entropy_coef,
            self.logits_diag,
            self.logits_offdiag,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Policy output for a batch: squashed actions plus what the actor gradient
/// needs.
#[derive(Clone, Debug)]
pub struct PolicySample<T> {
    pub actions: Matrix<T>,
    pub log_probs: Vec<T>,
    pub noise: Matrix<T>,
    pub mean: Matrix<T>,
    pub log_std: Matrix<T>,
    /// Whether the raw log-std was inside the clamp range.
    log_std_free: Vec<bool>,
}

/// Gradients of the critic objective, before any optimizer step.
#[derive(Clone, Debug)]
pub struct CriticGrads<T> {
    pub sa_encoder: MlpParams<T>,
    pub goal_encoder: MlpParams<T>,
    pub dlogits: Matrix<T>,
    pub stats: UpdateStats,
}

#[derive(Clone, Debug)]
pub struct CrlAgent<T> {
    config: AgentConfig,
    pub sa_encoder: MlpParams<T>,
    pub goal_encoder: MlpParams<T>,
    pub actor: MlpParams<T>,
    pub log_entropy_coef: T,
    pub sa_opt: AdamState<T>,
    pub goal_opt: AdamState<T>,
    pub actor_opt: AdamState<T>,
    pub entropy_opt: AdamState<T>,
}

fn concat<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    a.hcat(b)
}

impl<T: Real> CrlAgent<T> {
    pub fn new(config: AgentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(seed, INIT_STREAM);
        let sa_encoder = MlpParams::init(&config.sa_encoder_config(), &mut rng, 1.0)?;
        let goal_encoder = MlpParams::init(&config.goal_encoder_config(), &mut rng, 1.0)?;
        let actor = MlpParams::init(&config.actor_config(), &mut rng, ACTOR_OUTPUT_SCALE)?;
        let coef = match config.entropy {
            EntropyMode::Auto { initial } | EntropyMode::Fixed(initial) => initial,
        };
        Ok(Self {
            sa_opt: AdamState::for_params(&sa_encoder),
            goal_opt: AdamState::for_params(&goal_encoder),
            actor_opt: AdamState::for_params(&actor),
            entropy_opt: AdamState::new(1),
            log_entropy_coef: T::lit(Float::ln(coef.max(f64::MIN_POSITIVE))),
            config,
            sa_encoder,
            goal_encoder,
            actor,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut AgentConfig {
        &mut self.config
    }

    pub fn entropy_coef(&self) -> T {
        match self.config.entropy {
            EntropyMode::Fixed(c) => T::lit(c),
            EntropyMode::Auto { .. } => self.log_entropy_coef.exp(),
        }
    }

    pub fn target_entropy(&self) -> f64 {
        -(self.config.action_dim as f64)
    }

    /// Same agent at another float width; optimizer moments are carried over.
    pub fn cast<U: Real>(&self) -> CrlAgent<U> {
        let opt = |o: &AdamState<T>| AdamState {
            first: o.first.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
            second: o.second.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
            t: o.t,
        };
        CrlAgent {
            config: self.config.clone(),
            sa_encoder: self.sa_encoder.cast(),
            goal_encoder: self.goal_encoder.cast(),
            actor: self.actor.cast(),
            log_entropy_coef: U::lit(self.log_entropy_coef.to_f64_lossy()),
            sa_opt: opt(&self.sa_opt),
            goal_opt: opt(&self.goal_opt),
            actor_opt: opt(&self.actor_opt),
            entropy_opt: opt(&self.entropy_opt),
        }
    }

    fn check_rows(&self, states: &Matrix<T>, goals: &Matrix<T>) -> Result<()> {
        if states.rows() != goals.rows() {
            return Err(Error::Shape {
                op: "actor",
                lhs: states.shape(),
                rhs: goals.shape(),
            });
        }
        Ok(())
    }

    /// Deterministic action `tanh(μ)`.
    pub fn actor_mode(&self, states: &Matrix<T>, goals: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_rows(states, goals)?;
        let out = self.actor.predict(&concat(states, goals)?)?;
        Ok(out.columns(0, self.config.action_dim).map(|v| v.tanh()))
    }

    /// Reparameterized sample with fresh standard normal noise.
    pub fn actor_sample<R: Rng + ?Sized>(
        &self,
        states: &Matrix<T>,
        goals: &Matrix<T>,
        rng: &mut R,
    ) -> Result<(Matrix<T>, Vec<T>)> {
        let noise = Matrix::from_fn(states.rows(), self.config.action_dim, |_, _| standard_normal(rng));
        let s = self.actor_sample_with_noise(states, goals, &noise)?;
        Ok((s.actions, s.log_probs))
    }

    /// Sample for a given noise matrix `ε`: `a = tanh(μ + σ ε)`.
    pub fn actor_sample_with_noise(
        &self,
        states: &Matrix<T>,
        goals: &Matrix<T>,
        noise: &Matrix<T>,
    ) -> Result<PolicySample<T>> {
        self.check_rows(states, goals)?;
        let out = self.actor.predict(&concat(states, goals)?)?;
        self.sample_from_head(out, noise)
    }

    fn sample_from_head(&self, out: Matrix<T>, noise: &Matrix<T>) -> Result<PolicySample<T>> {
        let ad = self.config.action_dim;
        let b = out.rows();
        if noise.shape() != (b, ad) {
            return Err(Error::Shape {
                op: "actor_noise",
                lhs: noise.shape(),
                rhs: (b, ad),
            });
        }
        let (lo, hi) = (T::lit(LOG_STD_MIN), T::lit(LOG_STD_MAX));
        let half_log_two_pi = T::lit(0.5 * Float::ln(2.0 * core::f64::consts::PI));
        let eps = T::lit(TANH_EPS);
        let mean = out.columns(0, ad);
        let raw = out.columns(ad, 2 * ad);
        let log_std_free: Vec<bool> = raw.data().iter().map(|&v| v >= lo && v <= hi).collect();
        let log_std = raw.map(|v| v.max(lo).min(hi));
        let mut actions = Matrix::zeros(b, ad);
        let mut log_probs = vec![T::zero(); b];
        for i in 0..b {
            let mut lp = T::zero();
            for k in 0..ad {
                let e = noise.get(i, k);
                let ls = log_std.get(i, k);
                let u = mean.get(i, k) + ls.exp() * e;
                let a = u.tanh();
                actions.set(i, k, a);
                lp += -T::lit(0.5) * e * e - ls - half_log_two_pi - (T::one() - a * a + eps).ln();
            }
            log_probs[i] = lp;
        }
        Ok(PolicySample {
            actions,
            log_probs,
            noise: noise.clone(),
            mean,
            log_std,
            log_std_free,
        })
    }

    fn check_batch(&self, batch: &CrlBatch<T>) -> Result<()> {
        let b = batch.len();
        let c = &self.config;
        let expect = [
            (batch.states.shape(), (b, c.state_dim)),
            (batch.actions.shape(), (b, c.action_dim)),
            (batch.future_goals.shape(), (b, c.goal_dim)),
        ];
        for (got, want) in expect {
            if got != want {
                return Err(Error::Shape {
                    op: "crl_batch",
                    lhs: got,
                    rhs: want,
                });
            }
        }
        if b < 2 {
            return Err(Error::BatchTooSmall(b));
        }
        Ok(())
    }

    /// Logits of the batch under the current encoders.
    pub fn logits(&self, batch: &CrlBatch<T>) -> Result<Matrix<T>> {
        self.check_batch(batch)?;
        let phi = self.sa_encoder.predict(&concat(&batch.states, &batch.actions)?)?;
        let psi = self.goal_encoder.predict(&batch.future_goals)?;
        energy_matrix(self.config.energy, &phi, &psi)
    }

    /// Critic loss and gradients without touching the parameters.
    pub fn critic_gradients(&self, batch: &CrlBatch<T>) -> Result<CriticGrads<T>> {
        self.check_batch(batch)?;
        let (phi, sa_cache) = self.sa_encoder.forward(&concat(&batch.states, &batch.actions)?)?;
        let (psi, g_cache) = self.goal_encoder.forward(&batch.future_goals)?;
        let logits = energy_matrix(self.config.energy, &phi, &psi)?;
        let (loss, mut dlogits) = critic_loss(self.config.loss, &logits)?;
        let (penalty, dpen) = logsumexp_penalty(&logits, self.config.logsumexp_beta)?;
        if !(loss + penalty).is_finite() {
            return Err(Error::NonFinite(format!(
                "critic loss {loss} + penalty {penalty} ({} / {})",
                self.config.loss, self.config.energy
            )));
        }
        for (d, &p) in dlogits.data_mut().iter_mut().zip(dpen.data()) {
            *d += p;
        }
        let (dphi, dpsi) = energy_backward(self.config.energy, &phi, &psi, &dlogits)?;
        let (_, sa_grads) = self.sa_encoder.backward_with(&sa_cache, &dphi, false, true)?;
        let (_, g_grads) = self.goal_encoder.backward_with(&g_cache, &dpsi, false, true)?;
        let b = logits.rows();
        let mut diag = 0.0;
        let mut off = 0.0;
        for i in 0..b {
            for j in 0..b {
                let v = logits.get(i, j).to_f64_lossy();
                if i == j {
                    diag += v;
                } else {
                    off += v;
                }
            }
        }
        Ok(CriticGrads {
            sa_encoder: sa_grads.expect("requested"),
            goal_encoder: g_grads.expect("requested"),
            dlogits,
            stats: UpdateStats {
                critic_loss: loss.to_f64_lossy(),
                penalty: penalty.to_f64_lossy(),
                logits_diag: diag / b as f64,
                logits_offdiag: off / (b * (b - 1)) as f64,
                entropy_coef: self.entropy_coef().to_f64_lossy(),
                ..UpdateStats::default()
            },
        })
    }

    /// One optimizer step on both encoders.
    pub fn critic_update(&mut self, batch: &CrlBatch<T>) -> Result<UpdateStats> {
        let g = self.critic_gradients(batch)?;
        self.apply_critic_grads(&g.sa_encoder, &g.goal_encoder)?;
        Ok(g.stats)
    }

    /// Backpropagates a given logits gradient into the encoders and steps them.
    pub fn critic_step_from_logit_grad(&mut self, batch: &CrlBatch<T>, dlogits: &Matrix<T>) -> Result<()> {
        self.check_batch(batch)?;
        let (phi, sa_cache) = self.sa_encoder.forward(&concat(&batch.states, &batch.actions)?)?;
        let (psi, g_cache) = self.goal_encoder.forward(&batch.future_goals)?;
        let (dphi, dpsi) = energy_backward(self.config.energy, &phi, &psi, dlogits)?;
        let (_, sa) = self.sa_encoder.backward_with(&sa_cache, &dphi, false, true)?;
        let (_, g) = self.goal_encoder.backward_with(&g_cache, &dpsi, false, true)?;
        self.apply_critic_grads(&sa.expect("requested"), &g.expect("requested"))
    }

    fn apply_critic_grads(&mut self, sa: &MlpParams<T>, goal: &MlpParams<T>) -> Result<()> {
        let hyper = self.config.critic_hyper();
        // Check both before stepping either, so a failure leaves no half update.
        for g in [sa, goal] {
            if let Some(i) = g.values().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("critic gradient entry {i}")));
            }
        }
        self.sa_opt.step_mlp(&mut self.sa_encoder, sa, &hyper)?;
        self.goal_opt.step_mlp(&mut self.goal_encoder, goal, &hyper)
    }

    /// Actor loss, its parameter gradient and the policy sample, for fixed
    /// noise `ε`. Encoders are treated as constants.
    pub fn actor_gradients_with_noise(
        &self,
        batch: &CrlBatch<T>,
        noise: &Matrix<T>,
    ) -> Result<(T, MlpParams<T>, PolicySample<T>)> {
        self.check_batch(batch)?;
        let alpha = self.config.alpha_random;
        if alpha > 0.0 && batch.random_goals.is_none() {
            return Err(Error::Invalid("alpha_random > 0 needs random goals in the batch".into()));
        }
        let b = batch.len();
        let bt = T::lit(b as f64);
        let ad = self.config.action_dim;
        let sd = self.config.state_dim;
        let (out, actor_cache) = self.actor.forward(&concat(&batch.states, &batch.future_goals)?)?;
        let sample = self.sample_from_head(out, noise)?;
        let (phi, sa_cache) = self.sa_encoder.forward(&concat(&batch.states, &sample.actions)?)?;
        let coef = self.entropy_coef();
        let energy = self.config.energy;

        let psi = self.goal_encoder.predict(&batch.future_goals)?;
        let f_future = energy_pairs(energy, &phi, &psi)?;
        let w_future = T::one() - T::lit(alpha);
        let (mut dphi, _) = energy_pairs_backward(energy, &phi, &psi, &vec![-w_future / bt; b])?;
        let mut critic_term = T::zero();
        for &v in &f_future {
            critic_term += w_future * v;
        }
        if alpha > 0.0 {
            let rg = batch.random_goals.as_ref().expect("checked above");
            let psi_r = self.goal_encoder.predict(rg)?;
            let f_rand = energy_pairs(energy, &phi, &psi_r)?;
            let w = T::lit(alpha);
            let (dphi_r, _) = energy_pairs_backward(energy, &phi, &psi_r, &vec![-w / bt; b])?;
            for (d, &r) in dphi.data_mut().iter_mut().zip(dphi_r.data()) {
                *d += r;
            }
            for &v in &f_rand {
                critic_term += w * v;
            }
        }
        let mut loss = -critic_term / bt;
        for &lp in &sample.log_probs {
            loss += coef * lp / bt;
        }

        let (dsa, _) = self.sa_encoder.backward_with(&sa_cache, &dphi, true, false)?;
        let dsa = dsa.expect("requested");
        let ent_w = coef / bt;
        let eps = T::lit(TANH_EPS);
        let mut dhead = Matrix::zeros(b, 2 * ad);
        for i in 0..b {
            for k in 0..ad {
                let a = sample.actions.get(i, k);
                let one_m = T::one() - a * a;
                // Through the critic: ∂a/∂u = 1 − a²; through −log(1 − a² + ε).
                let du = dsa.get(i, sd + k) * one_m + ent_w * T::lit(2.0) * a * one_m / (one_m + eps);
                let sigma = sample.log_std.get(i, k).exp();
                let dls = if sample.log_std_free[i * ad + k] {
                    du * sigma * sample.noise.get(i, k) - ent_w
                } else {
                    T::zero()
                };
                dhead.set(i, k, du);
                dhead.set(i, ad + k, dls);
            }
        }
        let (_, grads) = self.actor.backward_with(&actor_cache, &dhead, false, true)?;
        Ok((loss, grads.expect("requested"), sample))
    }

    /// One optimizer step on the actor with freshly drawn noise.
    pub fn actor_update<R: Rng + ?Sized>(&mut self, batch: &CrlBatch<T>, rng: &mut R) -> Result<(UpdateStats, Vec<T>)> {
        let noise = Matrix::from_fn(batch.len(), self.config.action_dim, |_, _| standard_normal(rng));
        let (loss, grads, sample) = self.actor_gradients_with_noise(batch, &noise)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("actor loss {loss}")));
        }
        self.actor_opt
            .step_mlp(&mut self.actor, &grads, &AdamHyper::with_lr(self.config.policy_lr))?;
        let b = sample.log_probs.len() as f64;
        let entropy = -sample.log_probs.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / b;
        Ok((
            UpdateStats {
                actor_loss: loss.to_f64_lossy(),
                entropy,
                entropy_coef: self.entropy_coef().to_f64_lossy(),
                ..UpdateStats::default()
            },
            sample.log_probs,
        ))
    }

    /// Gradient of `exp(c)·mean(−log π − H)` with respect to `c = log coef`.
    pub fn entropy_coef_gradient(&self, log_probs: &[T]) -> T {
        let target = T::lit(self.target_entropy());
        let n = T::lit(log_probs.len().max(1) as f64);
        let mean: T = log_probs.iter().map(|&lp| -lp - target).sum::<T>() / n;
        self.log_entropy_coef.exp() * mean
    }

    /// One Adam step on the log coefficient; a no-op for a fixed coefficient.
    pub fn entropy_coef_update(&mut self, log_probs: &[T]) -> Result<()> {
        if let EntropyMode::Fixed(_) = self.config.entropy {
            return Ok(());
        }
        let g = [self.entropy_coef_gradient(log_probs)];
        let mut p = [self.log_entropy_coef];
        self.entropy_opt
            .step(&mut p, &g, &AdamHyper::with_lr(self.config.entropy_lr))?;
        self.log_entropy_coef = p[0];
        Ok(())
    }

    /// Critic step, actor step and entropy step on one batch.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &CrlBatch<T>, rng: &mut R) -> Result<UpdateStats> {
        let critic = self.critic_update(batch)?;
        let (actor, log_probs) = self.actor_update(batch, rng)?;
        self.entropy_coef_update(&log_probs)?;
        Ok(UpdateStats {
            actor_loss: actor.actor_loss,
            entropy: actor.entropy,
            entropy_coef: self.entropy_coef().to_f64_lossy(),
            ..critic
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvId;
    use crate::gradcheck::{finite_diff_grad, max_rel_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> AgentConfig {
        AgentConfig {
            hidden: vec![8, 8],
            repr_dim: 4,
            ..AgentConfig::for_env(&EnvSpec::new(EnvId::PointMassCircle))
        }
    }

    fn random_batch(b: usize, rng: &mut ChaCha8Rng, with_random: bool) -> CrlBatch<f64> {
        let mut m = |c: usize, s: f64| Matrix::from_fn(b, c, |_, _| rng.random_range(-s..s));
        CrlBatch {
            states: m(4, 2.0),
            actions: m(2, 0.9),
            future_goals: m(2, 2.0),
            random_goals: if with_random { Some(m(2, 2.0)) } else { None },
        }
    }

    #[test]
    fn actions_stay_inside_the_box() {
        let agent = CrlAgent::<f32>::new(small_config(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = Matrix::from_fn(64, 4, |_, _| rng.random_range(-5.0..5.0));
        let g = Matrix::from_fn(64, 2, |_, _| rng.random_range(-5.0..5.0));
        let (a, lp) = agent.actor_sample(&s, &g, &mut rng).unwrap();
        assert!(a.data().iter().all(|v| v.abs() < 1.0));
        assert!(lp.iter().all(|v| v.is_finite()));
        assert_eq!(agent.actor_mode(&s, &g).unwrap().shape(), (64, 2));
    }

    #[test]
    fn critic_and_actor_touch_disjoint_parameters() {
        let mut agent = CrlAgent::<f64>::new(small_config(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = random_batch(8, &mut rng, false);
        let actor = agent.actor.clone();
        agent.critic_update(&batch).unwrap();
        assert_eq!(agent.actor, actor);
        let (sa, g) = (agent.sa_encoder.clone(), agent.goal_encoder.clone());
        agent.actor_update(&batch, &mut rng).unwrap();
        assert_eq!(agent.sa_encoder, sa);
        assert_eq!(agent.goal_encoder, g);
        assert_ne!(agent.actor, actor);
    }

    #[test]
    fn zero_logit_gradient_leaves_encoders() {
        let mut agent = CrlAgent::<f64>::new(AgentConfig { logsumexp_beta: 0.0, ..small_config() }, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batch = random_batch(8, &mut rng, false);
        let before = (agent.sa_encoder.clone(), agent.goal_encoder.clone());
        agent.critic_step_from_logit_grad(&batch, &Matrix::zeros(8, 8)).unwrap();
        assert_eq!((agent.sa_encoder.clone(), agent.goal_encoder.clone()), before);
    }

    #[test]
    fn alpha_mixing_needs_random_goals() {
        let mut agent = CrlAgent::<f64>::new(AgentConfig { alpha_random: 0.3, ..small_config() }, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let batch = random_batch(8, &mut rng, false);
        assert!(agent.actor_update(&batch, &mut rng).is_err());
    }

    #[test]
    fn actor_gradient_with_frozen_noise() {
        for alpha in [0.0, 0.4] {
            let agent = CrlAgent::<f64>::new(AgentConfig { alpha_random: alpha, ..small_config() }, 5).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let batch = random_batch(6, &mut rng, alpha > 0.0);
            let noise = Matrix::from_fn(6, 2, |_, _| standard_normal::<f64, _>(&mut rng));
            let (_, grads, _) = agent.actor_gradients_with_noise(&batch, &noise).unwrap();
            let numeric = finite_diff_grad(
                |v: &[f64]| {
                    let mut a = agent.clone();
                    a.actor.values_mut().copy_from_slice(v);
                    a.actor_gradients_with_noise(&batch, &noise).unwrap().0
                },
                agent.actor.values(),
                1e-6,
            );
            assert!(max_rel_error(grads.values(), &numeric) < 1e-4, "alpha {alpha}");
        }
    }

    #[test]
    fn entropy_fixed_point_and_direction() {
        let mut agent = CrlAgent::<f64>::new(small_config(), 0).unwrap();
        // Target entropy is −2, so log π = 2 per sample is the fixed point.
        assert_eq!(agent.entropy_coef_gradient(&[2.0, 2.0]), 0.0);
        let before = agent.entropy_coef();
        // Entropy −3 is below the target: the coefficient grows.
        agent.entropy_coef_update(&[3.0, 3.0]).unwrap();
        assert!(agent.entropy_coef() > before);
    }
}
