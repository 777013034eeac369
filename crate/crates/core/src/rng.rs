//! Deterministic random streams.
//!
//! Every environment slot and every consumer of randomness gets its own
//! ChaCha stream keyed by the master seed and a stream id, so results do not
//! depend on the order in which workers touch them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::real::Real;

pub type Stream = ChaCha8Rng;

/// Stream ids below this are reserved for environment slots.
pub const ENV_STREAMS: u64 = 1 << 32;
pub const UPDATE_STREAM: u64 = ENV_STREAMS;
pub const EVAL_STREAM: u64 = ENV_STREAMS + 1;
pub const INIT_STREAM: u64 = ENV_STREAMS + 2;

pub fn stream(seed: u64, id: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Stream for environment slot `index`.
pub fn env_stream(seed: u64, index: usize) -> Stream {
    stream(seed, index as u64)
}

#[inline]
pub fn standard_normal<T: Real, R: rand::Rng + ?Sized>(rng: &mut R) -> T {
    let z: f64 = StandardNormal.sample(rng);
    T::lit(z)
}
