//! Interquartile mean and its standard error.

use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};

fn trimmed(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Invalid("iqm of an empty sequence".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("iqm input".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cut = sorted.len() / 4;
    Ok(sorted[cut..sorted.len() - cut].to_vec())
}

/// Mean of the values left after dropping `floor(n/4)` from each end.
pub fn iqm(values: &[f64]) -> Result<f64> {
    let kept = trimmed(values)?;
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Sample standard deviation of the retained values over `sqrt(retained)`.
/// A single retained value has stderr 0.
pub fn iqm_stderr(values: &[f64]) -> Result<f64> {
    let kept = trimmed(values)?;
    let k = kept.len();
    if k < 2 {
        return Ok(0.0);
    }
    let mean = kept.iter().sum::<f64>() / k as f64;
    let var = kept.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1) as f64;
    Ok(Float::sqrt(var) / Float::sqrt(k as f64))
}
