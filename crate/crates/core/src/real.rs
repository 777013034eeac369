//! Floating point abstraction shared by every kernel.
//!
//! Training runs in `f32`; `f64` exists for finite-difference gradient checks.

use core::fmt::{Debug, Display};
use core::iter::Sum;
use core::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
{
    /// Converts an `f64` literal, rounding to the target width.
    #[inline]
    fn lit(x: f64) -> Self {
        // Both implementors accept every f64.
        Self::from_f64(x).unwrap()
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `exp` for hot loops. Same as [`Float::exp`] unless a width provides a
    /// branch-free version the compiler can vectorize.
    #[inline]
    fn exp_kernel(self) -> Self {
        self.exp()
    }
}

impl Real for f32 {
    #[inline]
    fn exp_kernel(self) -> Self {
        exp_f32(self)
    }
}

impl Real for f64 {}

/// Branch-free `expf`: Cody-Waite reduction by `ln 2` and a degree-6
/// polynomial on `[-ln2/2, ln2/2]`, within 2 ulp of the correctly rounded
/// value on the normal range. Underflows to zero below `-87.3`, overflows to
/// infinity above `88.72`, propagates NaN.
#[inline]
pub fn exp_f32(x: f32) -> f32 {
    const LOG2E: f32 = core::f32::consts::LOG2_E;
    const LN2_HI: f32 = 0.693_359_4;
    const LN2_LO: f32 = -2.121_944_4e-4;
    let xc = x.clamp(-87.3, 88.72);
    // Round to nearest without calling into libm.
    let n = (xc * LOG2E + 0.5).floor_fast();
    let r = xc - n * LN2_HI - n * LN2_LO;
    let z = r * r;
    let p = ((((1.987_569_2e-4 * r + 1.398_199_9e-3) * r + 8.333_452e-3) * r + 4.166_579_6e-2) * r
        + 1.666_666_5e-1)
        * r
        + 5.000_000_1e-1;
    let y = p * z + r + 1.0;
    // 2ⁿ in two halves so neither factor leaves the normal range.
    let n = n as i32;
    let h = n >> 1;
    let s1 = f32::from_bits(((h + 127) as u32) << 23);
    let s2 = f32::from_bits(((n - h + 127) as u32) << 23);
    let out = y * s1 * s2;
    if x > 88.72 {
        f32::INFINITY
    } else if x < -87.3 {
        0.0
    } else if x.is_nan() {
        x
    } else {
        out
    }
}

trait FloorFast {
    fn floor_fast(self) -> Self;
}

impl FloorFast for f32 {
    /// Floor for `|x| < 2²³` via truncation and a correction.
    #[inline]
    fn floor_fast(self) -> f32 {
        let t = self as i32 as f32;
        if t > self {
            t - 1.0
        } else {
            t
        }
    }
}

/// Sum with eight interleaved partial accumulators, combined pairwise. The
/// order is fixed, so results are reproducible, and it vectorizes.
#[inline]
pub fn lane_sum<T: Real>(xs: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let chunks = xs.chunks_exact(8);
    let rest = chunks.remainder();
    for c in chunks {
        for q in 0..8 {
            acc[q] += c[q];
        }
    }
    for (q, &v) in rest.iter().enumerate() {
        acc[q] += v;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

/// Maximum, `-inf` for an empty slice.
#[inline]
pub fn lane_max<T: Real>(xs: &[T]) -> T {
    let mut acc = [T::neg_infinity(); 8];
    let chunks = xs.chunks_exact(8);
    let rest = chunks.remainder();
    for c in chunks {
        for q in 0..8 {
            acc[q] = acc[q].max(c[q]);
        }
    }
    for (q, &v) in rest.iter().enumerate() {
        acc[q] = acc[q].max(v);
    }
    acc.iter().copied().fold(T::neg_infinity(), T::max)
}

/// Logistic function, evaluated on the branch that cannot overflow.
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    // exp(−|x|) never overflows; pick the matching form by sign.
    let e = (-x.abs()).exp_kernel();
    let pos = T::one() / (T::one() + e);
    if x >= T::zero() {
        pos
    } else {
        e * pos
    }
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}
