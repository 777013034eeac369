//! Bias-corrected Adam with optional decoupled weight decay.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::mlp::MlpParams;
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl AdamHyper {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.epsilon > 0.0
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && self.beta1 > 0.0
            && (0.0..1.0).contains(&self.beta2)
            && self.beta2 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("bad Adam hyperparameters: {self:?}")))
        }
    }
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub first: Vec<T>,
    pub second: Vec<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            first: vec![T::zero(); len],
            second: vec![T::zero(); len],
            t: 0,
        }
    }

    pub fn for_params(params: &MlpParams<T>) -> Self {
        Self::new(params.len())
    }

    /// One update of `params` along `grads`. Non-finite gradients are an
    /// error and leave everything untouched.
    pub fn step(&mut self, params: &mut [T], grads: &[T], hyper: &AdamHyper) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first.len() {
            return Err(Error::Length {
                op: "adam_step",
                expected: params.len(),
                found: grads.len(),
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {i}")));
        }
        self.t += 1;
        let lr = T::lit(hyper.learning_rate);
        let b1 = T::lit(hyper.beta1);
        let b2 = T::lit(hyper.beta2);
        let eps = T::lit(hyper.epsilon);
        let t = self.t as f64;
        let c1 = T::lit(1.0 - Float::powf(hyper.beta1, t));
        let c2 = T::lit(1.0 - Float::powf(hyper.beta2, t));
        let decay = T::lit(hyper.learning_rate * hyper.weight_decay);
        let apply_decay = hyper.weight_decay > 0.0;
        for i in 0..params.len() {
            let g = grads[i];
            if apply_decay {
                params[i] -= decay * params[i];
            }
            self.first[i] = b1 * self.first[i] + (T::one() - b1) * g;
            self.second[i] = b2 * self.second[i] + (T::one() - b2) * g * g;
            let m_hat = self.first[i] / c1;
            let v_hat = self.second[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }

    pub fn step_mlp(&mut self, params: &mut MlpParams<T>, grads: &MlpParams<T>, hyper: &AdamHyper) -> Result<()> {
        self.step(params.values_mut(), grads.values(), hyper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = [0.5f64, -3.0, 7.25];
        let orig = p;
        let mut st = AdamState::new(3);
        st.step(&mut p, &[0.0; 3], &AdamHyper::with_lr(0.1)).unwrap();
        assert_eq!(p, orig);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_is_sign_sized() {
        let mut p = [0.0f64; 3];
        let g = [2.0, -0.5, 1e-3];
        let hyper = AdamHyper::with_lr(0.01);
        AdamState::new(3).step(&mut p, &g, &hyper).unwrap();
        for (pi, gi) in p.iter().zip(g) {
            let expected = -0.01 * gi / (gi.abs() + 1e-8);
            assert!((pi - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn quadratic_converges() {
        // f(θ) = θ², gradient 2θ.
        let hyper = AdamHyper::with_lr(0.1);
        let mut st = AdamState::new(1);
        let mut theta = [1.0f64];
        let mut trace = vec![1.0];
        for _ in 0..100 {
            let g = [2.0 * theta[0]];
            st.step(&mut theta, &g, &hyper).unwrap();
            trace.push(theta[0].abs());
        }
        assert!(theta[0].abs() < 0.1, "ended at {}", theta[0]);
        // Monotone decrease through the approach phase.
        for w in trace[..10].windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_side_effects() {
        let mut p = [1.0f32, 2.0];
        let mut st = AdamState::new(2);
        let err = st.step(&mut p, &[0.1, f32::NAN], &AdamHyper::default());
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(p, [1.0, 2.0]);
        assert_eq!(st.t, 0);
    }

    #[test]
    fn weight_decay_is_decoupled() {
        let mut p = [2.0f64];
        let hyper = AdamHyper {
            weight_decay: 0.5,
            ..AdamHyper::with_lr(0.1)
        };
        AdamState::new(1).step(&mut p, &[0.0], &hyper).unwrap();
        assert!((p[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-15);
    }
}
