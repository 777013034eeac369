//! Central finite differences, used as the independent oracle for every
//! hand-written gradient in the crate.

use alloc::vec::Vec;

use crate::real::Real;

/// `(f(x + eps·eᵢ) − f(x − eps·eᵢ)) / (2·eps)` for every coordinate.
pub fn finite_diff_grad<T: Real, F: FnMut(&[T]) -> T>(mut f: F, x: &[T], eps: T) -> Vec<T> {
    let mut probe = x.to_vec();
    let two = T::lit(2.0);
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let up = f(&probe);
            probe[i] = orig - eps;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (two * eps)
        })
        .collect()
}

/// Largest `|a − n| / max(|a|, |n|, 1e-6)` over paired entries.
pub fn max_rel_error<T: Real>(analytic: &[T], numeric: &[T]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let (a, n) = (a.to_f64_lossy(), n.to_f64_lossy());
            (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
        })
        .fold(0.0, f64::max)
}
