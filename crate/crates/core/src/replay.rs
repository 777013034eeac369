//! Per-environment trajectory storage and contrastive batch sampling.
//!
//! Each environment owns a ring of transitions stored field by field. Every
//! push gets a sequence number; the ring keeps the most recent `capacity` of
//! them and a list of episode spans over sequence numbers, so the end of the
//! episode containing any stored transition is found by binary search.
//!
//! A training pair is a uniformly chosen stored transition `(s, a)` at
//! sequence `q` and the goal of the state reached `k` steps later, where `k`
//! follows a geometric law truncated to the rest of the episode. The state
//! `k` steps after `s` is the `next_state` of transition `q + k − 1`.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use crate::env::{goal_of, EnvSpec};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition<'a> {
    pub state: &'a [f32],
    pub action: &'a [f32],
    pub next_state: &'a [f32],
    pub truncated: bool,
    pub done: bool,
    pub episode: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Span {
    episode: u64,
    first: u64,
    last: u64,
    closed: bool,
}

#[derive(Clone, Debug)]
struct Ring {
    states: Vec<f32>,
    actions: Vec<f32>,
    next_states: Vec<f32>,
    episodes: Vec<u64>,
    ends: Vec<u8>,
    next_seq: u64,
    spans: VecDeque<Span>,
}

const END_DONE: u8 = 1;
const END_TRUNCATED: u8 = 2;

/// Where one row of a contrastive batch came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleIndex {
    pub env: usize,
    pub seq: u64,
    /// Sequence whose `next_state` supplies the future goal.
    pub goal_seq: u64,
    /// Source of the random goal, when one was drawn.
    pub random: Option<(usize, u64)>,
}

impl SampleIndex {
    pub fn offset(&self) -> u64 {
        self.goal_seq - self.seq + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrlBatch<T> {
    pub states: Matrix<T>,
    pub actions: Matrix<T>,
    pub future_goals: Matrix<T>,
    pub random_goals: Option<Matrix<T>>,
}

impl<T: Real> CrlBatch<T> {
    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.rows() == 0
    }

    pub fn cast<U: Real>(&self) -> CrlBatch<U> {
        CrlBatch {
            states: self.states.cast(),
            actions: self.actions.cast(),
            future_goals: self.future_goals.cast(),
            random_goals: self.random_goals.as_ref().map(Matrix::cast),
        }
    }
}

/// Offset `k ∈ 1..=max_offset` with `P(k) ∝ γ^(k−1)`, drawn by inverting the
/// truncated CDF `(1 − γᵏ)/(1 − γᵐ)`.
pub fn truncated_geometric<R: Rng + ?Sized>(rng: &mut R, gamma: f64, max_offset: u64) -> Result<u64> {
    if max_offset < 1 {
        return Err(Error::Invalid(format!("max_offset must be >= 1, got {max_offset}")));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Invalid(format!("discount must lie in [0, 1), got {gamma}")));
    }
    if gamma == 0.0 || max_offset == 1 {
        return Ok(1);
    }
    let u: f64 = rng.random();
    let mass = -Float::exp_m1(max_offset as f64 * Float::ln(gamma));
    let k = 1.0 + Float::floor(Float::ln_1p(-u * mass) / Float::ln(gamma));
    Ok((k as u64).clamp(1, max_offset))
}

/// `P(k)` of [`truncated_geometric`].
pub fn truncated_geometric_pmf(gamma: f64, max_offset: u64, k: u64) -> f64 {
    if k < 1 || k > max_offset {
        return 0.0;
    }
    if gamma == 0.0 {
        return if k == 1 { 1.0 } else { 0.0 };
    }
    let mass = -Float::exp_m1(max_offset as f64 * Float::ln(gamma));
    Float::powi(gamma, (k - 1) as i32) * (1.0 - gamma) / mass
}

#[derive(Clone, Debug)]
pub struct TrajectoryBuffer {
    spec: EnvSpec,
    capacity: usize,
    min_size: usize,
    rings: Vec<Ring>,
}

impl TrajectoryBuffer {
    pub fn new(spec: &EnvSpec, num_envs: usize, capacity: usize, min_size: usize) -> Result<Self> {
        if num_envs == 0 || capacity == 0 {
            return Err(Error::Invalid(format!(
                "replay needs at least one environment and slot (got {num_envs} x {capacity})"
            )));
        }
        if min_size > capacity {
            return Err(Error::Invalid(format!(
                "min_replay_size {min_size} exceeds max_replay_size {capacity}"
            )));
        }
        let ring = Ring {
            states: vec![0.0; capacity * spec.state_dim],
            actions: vec![0.0; capacity * spec.action_dim],
            next_states: vec![0.0; capacity * spec.state_dim],
            episodes: vec![0; capacity],
            ends: vec![0; capacity],
            next_seq: 0,
            spans: VecDeque::new(),
        };
        Ok(Self {
            spec: spec.clone(),
            capacity,
            min_size,
            rings: vec![ring; num_envs],
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn num_envs(&self) -> usize {
        self.rings.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn min_size(&self) -> usize {
        self.min_size
    }

    /// Stored transitions in environment `env`.
    pub fn len(&self, env: usize) -> usize {
        (self.rings[env].next_seq as usize).min(self.capacity)
    }

    pub fn total_len(&self) -> usize {
        (0..self.rings.len()).map(|e| self.len(e)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total_len() == 0
    }

    /// Whether every environment holds at least `min_size` transitions.
    pub fn is_ready(&self) -> bool {
        (0..self.rings.len()).all(|e| self.len(e) >= self.min_size.max(1))
    }

    /// Oldest stored sequence number of `env`.
    pub fn oldest_seq(&self, env: usize) -> u64 {
        self.rings[env].next_seq - self.len(env) as u64
    }

    pub fn next_seq(&self, env: usize) -> u64 {
        self.rings[env].next_seq
    }

    /// Bytes held by the stored arrays and the span index.
    pub fn footprint(&self) -> usize {
        self.rings
            .iter()
            .map(|r| {
                4 * (r.states.capacity() + r.actions.capacity() + r.next_states.capacity())
                    + 8 * r.episodes.capacity()
                    + r.ends.capacity()
                    + core::mem::size_of::<Span>() * r.spans.capacity()
            })
            .sum()
    }

    pub fn clear(&mut self) {
        for r in &mut self.rings {
            r.next_seq = 0;
            r.spans.clear();
        }
    }

    pub fn push(&mut self, env: usize, t: &Transition<'_>) -> Result<()> {
        let count = self.rings.len();
        let (sd, ad, cap) = (self.spec.state_dim, self.spec.action_dim, self.capacity);
        let ring = self.rings.get_mut(env).ok_or(Error::EnvIndex { index: env, count })?;
        if t.state.len() != sd || t.next_state.len() != sd || t.action.len() != ad {
            return Err(Error::Length {
                op: "replay_push",
                expected: sd,
                found: t.state.len(),
            });
        }
        if let Some(last) = ring.spans.back() {
            if t.episode < last.episode {
                return Err(Error::Invalid(format!(
                    "episode id went backwards ({} after {})",
                    t.episode, last.episode
                )));
            }
            if t.episode == last.episode && last.closed {
                return Err(Error::OpenEpisodeBoundary { episode: t.episode });
            }
        }
        let seq = ring.next_seq;
        let slot = (seq % cap as u64) as usize;
        ring.states[slot * sd..(slot + 1) * sd].copy_from_slice(t.state);
        ring.actions[slot * ad..(slot + 1) * ad].copy_from_slice(t.action);
        ring.next_states[slot * sd..(slot + 1) * sd].copy_from_slice(t.next_state);
        ring.episodes[slot] = t.episode;
        ring.ends[slot] = (t.done as u8) * END_DONE | (t.truncated as u8) * END_TRUNCATED;
        ring.next_seq += 1;
        let closes = t.done || t.truncated;
        match ring.spans.back_mut() {
            Some(last) if last.episode == t.episode => {
                last.last = seq;
                last.closed = closes;
            }
            _ => {
                if let Some(last) = ring.spans.back_mut() {
                    // A new episode id implicitly ends the previous one.
                    last.closed = true;
                }
                ring.spans.push_back(Span {
                    episode: t.episode,
                    first: seq,
                    last: seq,
                    closed: closes,
                });
            }
        }
        let oldest = ring.next_seq.saturating_sub(cap as u64);
        while ring.spans.front().is_some_and(|s| s.last < oldest) {
            ring.spans.pop_front();
        }
        Ok(())
    }

    fn span_of(&self, env: usize, seq: u64) -> Option<Span> {
        let ring = &self.rings[env];
        if seq < self.oldest_seq(env) || seq >= ring.next_seq {
            return None;
        }
        let i = ring.spans.partition_point(|s| s.last < seq);
        ring.spans.get(i).copied().filter(|s| s.first <= seq)
    }

    /// Episode id of a stored transition.
    pub fn episode_of(&self, env: usize, seq: u64) -> Option<u64> {
        self.span_of(env, seq).map(|s| s.episode)
    }

    /// Last stored sequence of the episode containing `seq`.
    pub fn episode_end(&self, env: usize, seq: u64) -> Option<u64> {
        self.span_of(env, seq).map(|s| s.last)
    }

    fn slot(&self, seq: u64) -> usize {
        (seq % self.capacity as u64) as usize
    }

    pub fn state(&self, env: usize, seq: u64) -> &[f32] {
        let sd = self.spec.state_dim;
        let s = self.slot(seq);
        &self.rings[env].states[s * sd..(s + 1) * sd]
    }

    pub fn action(&self, env: usize, seq: u64) -> &[f32] {
        let ad = self.spec.action_dim;
        let s = self.slot(seq);
        &self.rings[env].actions[s * ad..(s + 1) * ad]
    }

    pub fn next_state(&self, env: usize, seq: u64) -> &[f32] {
        let sd = self.spec.state_dim;
        let s = self.slot(seq);
        &self.rings[env].next_states[s * sd..(s + 1) * sd]
    }

    /// `(done, truncated)` flags of a stored transition.
    pub fn end_flags(&self, env: usize, seq: u64) -> (bool, bool) {
        let e = self.rings[env].ends[self.slot(seq)];
        (e & END_DONE != 0, e & END_TRUNCATED != 0)
    }

    /// Episode id written with a stored transition.
    pub fn stored_episode(&self, env: usize, seq: u64) -> u64 {
        self.rings[env].episodes[self.slot(seq)]
    }

    fn uniform_position<R: Rng + ?Sized>(&self, rng: &mut R, total: usize) -> (usize, u64) {
        let mut u = rng.random_range(0..total);
        for env in 0..self.rings.len() {
            let n = self.len(env);
            if u < n {
                return (env, self.oldest_seq(env) + u as u64);
            }
            u -= n;
        }
        unreachable!("position below total length")
    }

    /// Chooses batch rows without copying data; exposed for audits.
    pub fn sample_indices<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        batch_size: usize,
        gamma: f64,
        alpha_random: f64,
    ) -> Result<Vec<SampleIndex>> {
        if batch_size < 2 {
            return Err(Error::BatchTooSmall(batch_size));
        }
        if !(0.0..=1.0).contains(&alpha_random) {
            return Err(Error::Invalid(format!("alpha_random must lie in [0, 1], got {alpha_random}")));
        }
        if !self.is_ready() {
            let have = (0..self.rings.len()).map(|e| self.len(e)).min().unwrap_or(0);
            return Err(Error::BelowPrefill {
                have,
                need: self.min_size.max(1),
            });
        }
        let total = self.total_len();
        let mut out = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let (env, seq) = self.uniform_position(rng, total);
            let end = self.episode_end(env, seq).expect("stored transition has a span");
            let k = truncated_geometric(rng, gamma, end - seq + 1)?;
            let random = (alpha_random > 0.0).then(|| self.uniform_position(rng, total));
            out.push(SampleIndex {
                env,
                seq,
                goal_seq: seq + k - 1,
                random,
            });
        }
        Ok(out)
    }

    /// Copies the rows named by `indices` into a batch.
    pub fn gather<T: Real>(&self, indices: &[SampleIndex]) -> CrlBatch<T> {
        let (sd, ad, gd) = (self.spec.state_dim, self.spec.action_dim, self.spec.goal_dim);
        let b = indices.len();
        let lit = |v: f32| T::lit(v as f64);
        let mut states = Matrix::zeros(b, sd);
        let mut actions = Matrix::zeros(b, ad);
        let mut goals = Matrix::zeros(b, gd);
        let with_random = indices.iter().any(|ix| ix.random.is_some());
        let mut random = with_random.then(|| Matrix::zeros(b, gd));
        for (i, ix) in indices.iter().enumerate() {
            for (o, &v) in states.row_mut(i).iter_mut().zip(self.state(ix.env, ix.seq)) {
                *o = lit(v);
            }
            for (o, &v) in actions.row_mut(i).iter_mut().zip(self.action(ix.env, ix.seq)) {
                *o = lit(v);
            }
            let g = goal_of(&self.spec, self.next_state(ix.env, ix.goal_seq));
            for (o, &v) in goals.row_mut(i).iter_mut().zip(&g[..gd]) {
                *o = lit(v);
            }
            if let (Some(m), Some((env, seq))) = (random.as_mut(), ix.random) {
                let g = goal_of(&self.spec, self.state(env, seq));
                for (o, &v) in m.row_mut(i).iter_mut().zip(&g[..gd]) {
                    *o = lit(v);
                }
            }
        }
        CrlBatch {
            states,
            actions,
            future_goals: goals,
            random_goals: random,
        }
    }

    pub fn sample_crl_batch<T: Real, R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        batch_size: usize,
        gamma: f64,
        alpha_random: f64,
    ) -> Result<CrlBatch<T>> {
        let idx = self.sample_indices(rng, batch_size, gamma, alpha_random)?;
        Ok(self.gather(&idx))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeStep {
    pub state: Vec<f32>,
    pub action: Vec<f32>,
    pub next_state: Vec<f32>,
}

/// A complete episode with its commanded goal.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub goal: Vec<f32>,
    pub steps: Vec<EpisodeStep>,
}

impl Episode {
    /// Distance between the goal and the goal coordinates of the final state.
    pub fn final_distance(&self, spec: &EnvSpec) -> Option<f32> {
        let last = self.steps.last()?;
        let g = goal_of(spec, &last.next_state);
        let sq: f32 = g[..spec.goal_dim].iter().zip(&self.goal).map(|(a, b)| (a - b) * (a - b)).sum();
        Some(sq.sqrt())
    }
}

/// Hindsight relabeling with the final strategy: with probability
/// `relabel_prob` the goal becomes the goal of the last state reached.
/// Returns the episode and whether it was relabeled.
pub fn her_relabel<R: Rng + ?Sized>(
    spec: &EnvSpec,
    episode: &Episode,
    rng: &mut R,
    relabel_prob: f64,
) -> Result<(Episode, bool)> {
    let last = episode
        .steps
        .last()
        .ok_or_else(|| Error::Invalid("cannot relabel an empty episode".into()))?;
    if !(0.0..=1.0).contains(&relabel_prob) {
        return Err(Error::Invalid(format!("relabel probability {relabel_prob} outside [0, 1]")));
    }
    let mut out = episode.clone();
    let relabel = rng.random::<f64>() < relabel_prob;
    if relabel {
        out.goal = goal_of(spec, &last.next_state)[..spec.goal_dim].to_vec();
    }
    Ok((out, relabel))
}
