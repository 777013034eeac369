//! Finite controlled Markov processes and their exact discounted state
//! visitation, used to check that a goal-conditioned critic is a probability.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};

/// Iteration stops once `γᵗ` drops below this.
pub const VISITATION_TRUNCATION: f64 = 1e-10;

const ROW_TOL: f64 = 1e-9;

/// Transition tensor `P[s][a][s']` stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularCmp {
    n_states: usize,
    n_actions: usize,
    p: Vec<f64>,
}

fn check_rows(values: &[f64], width: usize, n_actions: usize) -> Result<()> {
    for (row, chunk) in values.chunks(width).enumerate() {
        let sum: f64 = chunk.iter().sum();
        if chunk.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > ROW_TOL {
            return Err(Error::NotStochastic {
                state: row / n_actions,
                action: row % n_actions,
                sum,
            });
        }
    }
    Ok(())
}

fn random_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    // Normalized exponentials give a flat Dirichlet draw.
    let raw: Vec<f64> = (0..n).map(|_| -Float::ln(1.0 - rng.random::<f64>())).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

impl TabularCmp {
    pub fn new(n_states: usize, n_actions: usize, p: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || p.len() != n_states * n_actions * n_states {
            return Err(Error::Length {
                op: "tabular_cmp",
                expected: n_states * n_actions * n_states,
                found: p.len(),
            });
        }
        check_rows(&p, n_states, n_actions)?;
        Ok(Self {
            n_states,
            n_actions,
            p,
        })
    }

    pub fn random<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> Self {
        let p = (0..n_states * n_actions)
            .flat_map(|_| random_simplex(rng, n_states))
            .collect();
        Self {
            n_states,
            n_actions,
            p,
        }
    }

    /// Deterministic chain with actions left, stay, right; the ends clamp.
    pub fn chain(n_states: usize) -> Self {
        let mut p = vec![0.0; n_states * 3 * n_states];
        for s in 0..n_states {
            for (a, next) in [s.saturating_sub(1), s, (s + 1).min(n_states - 1)].into_iter().enumerate() {
                p[(s * 3 + a) * n_states + next] = 1.0;
            }
        }
        Self {
            n_states,
            n_actions: 3,
            p,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.p[(s * self.n_actions + a) * self.n_states + next]
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.p[start..start + self.n_states]
    }
}

/// Stationary policy `π[s][a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    pi: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, pi: Vec<f64>) -> Result<Self> {
        if pi.len() != n_states * n_actions {
            return Err(Error::Length {
                op: "tabular_policy",
                expected: n_states * n_actions,
                found: pi.len(),
            });
        }
        check_rows(&pi, n_actions, 1)?;
        Ok(Self {
            n_states,
            n_actions,
            pi,
        })
    }

    pub fn random<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> Self {
        let pi = (0..n_states).flat_map(|_| random_simplex(rng, n_actions)).collect();
        Self {
            n_states,
            n_actions,
            pi,
        }
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            pi: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.pi[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.pi[s * self.n_actions..(s + 1) * self.n_actions]
    }
}

/// `(1−γ) Σₜ γᵗ P(sₜ = g | s₀ = s, a₀ = a)` for every `g`, following `policy`
/// from step 1 on.
pub fn visitation_distribution(
    cmp: &TabularCmp,
    policy: &TabularPolicy,
    gamma: f64,
    s: usize,
    a: usize,
) -> Result<Vec<f64>> {
    let n = cmp.n_states;
    if policy.n_states != n || policy.n_actions != cmp.n_actions {
        return Err(Error::Shape {
            op: "visitation",
            lhs: (n, cmp.n_actions),
            rhs: (policy.n_states, policy.n_actions),
        });
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Invalid(format!("discount must lie in (0, 1), got {gamma}")));
    }
    if s >= n || a >= cmp.n_actions {
        return Err(Error::Invalid(format!("state-action ({s}, {a}) out of range")));
    }
    // State-to-state kernel under the policy.
    let mut m = vec![0.0; n * n];
    for from in 0..n {
        for act in 0..cmp.n_actions {
            let w = policy.prob(from, act);
            for (to, &p) in cmp.row(from, act).iter().enumerate() {
                m[from * n + to] += w * p;
            }
        }
    }
    let mut out = vec![0.0; n];
    out[s] = 1.0 - gamma;
    let mut dist = cmp.row(s, a).to_vec();
    let mut discount = gamma;
    while discount >= VISITATION_TRUNCATION {
        for (o, &d) in out.iter_mut().zip(&dist) {
            *o += (1.0 - gamma) * discount * d;
        }
        let mut next = vec![0.0; n];
        for (from, &d) in dist.iter().enumerate() {
            if d != 0.0 {
                for (o, &p) in next.iter_mut().zip(&m[from * n..(from + 1) * n]) {
                    *o += d * p;
                }
            }
        }
        dist = next;
        discount *= gamma;
    }
    Ok(out)
}

/// Discounted probability of visiting `g` after taking `a` in `s`.
pub fn tabular_visitation_oracle(
    cmp: &TabularCmp,
    policy: &TabularPolicy,
    gamma: f64,
    s: usize,
    a: usize,
    g: usize,
) -> Result<f64> {
    if g >= cmp.n_states {
        return Err(Error::Invalid(format!("goal state {g} out of range")));
    }
    Ok(visitation_distribution(cmp, policy, gamma, s, a)?[g])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state_absorbing() -> TabularCmp {
        // Action 0 moves s=0 to g=1; state 1 is absorbing.
        TabularCmp::new(2, 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn absorbing_move() {
        let cmp = two_state_absorbing();
        let pi = TabularPolicy::uniform(2, 1);
        let v = tabular_visitation_oracle(&cmp, &pi, 0.5, 0, 0, 1).unwrap();
        assert!((v - 0.5).abs() < 1e-9);
    }

    #[test]
    fn self_loop_is_normalized() {
        let cmp = two_state_absorbing();
        let pi = TabularPolicy::uniform(2, 1);
        let v = tabular_visitation_oracle(&cmp, &pi, 0.9, 1, 0, 1).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn distribution_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let cmp = TabularCmp::random(8, 3, &mut rng);
            let pi = TabularPolicy::random(8, 3, &mut rng);
            let d = visitation_distribution(&cmp, &pi, 0.95, 2, 1).unwrap();
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let err = TabularCmp::new(2, 1, vec![0.5, 0.4, 0.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::NotStochastic { state: 0, action: 0, .. }));
    }

    #[test]
    fn chain_moves() {
        let c = TabularCmp::chain(4);
        assert_eq!(c.prob(0, 0, 0), 1.0);
        assert_eq!(c.prob(2, 2, 3), 1.0);
        assert_eq!(c.prob(3, 2, 3), 1.0);
        assert_eq!(c.prob(1, 1, 1), 1.0);
    }
}
