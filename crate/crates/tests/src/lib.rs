//! Helpers for the end-to-end acceptance run: a sequential criterion runner
//! that survives panics, and the statistical oracles the criteria share.

use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Outcome of one criterion.
#[derive(Clone, Debug)]
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Runs criteria in order, one line each; a panic counts as a failure.
#[derive(Default)]
pub struct Runner {
    results: Vec<(u32, bool)>,
}

impl Runner {
    pub fn run(&mut self, id: u32, name: &str, check: impl FnOnce() -> Verdict) {
        let t0 = Instant::now();
        let verdict = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Verdict::new(false, format!("panicked: {msg}"))
        });
        let line = format!(
            "criterion {id:>2} {} {name} ({:.1}s): {}",
            if verdict.pass { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64(),
            verdict.detail
        );
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
        self.results.push((id, verdict.pass));
    }

    pub fn failed(&self) -> Vec<u32> {
        self.results.iter().filter(|(_, p)| !p).map(|(id, _)| *id).collect()
    }
}

/// Pearson chi-square p-value; adjacent bins are pooled until each expects at
/// least five draws.
pub fn chi_square_p(observed: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = observed.iter().sum();
    let (mut stat, mut bins) = (0.0, 0usize);
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        o_acc += o as f64;
        e_acc += p * n as f64;
        if e_acc >= 5.0 {
            stat += (o_acc - e_acc).powi(2) / e_acc;
            bins += 1;
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 {
        stat += (o_acc - e_acc).powi(2) / e_acc;
        bins += 1;
    }
    if bins < 2 {
        return 1.0;
    }
    1.0 - ChiSquared::new((bins - 1) as f64).expect("positive dof").cdf(stat)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty");
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solver_recovers_a_known_solution() {
        let a = vec![vec![2.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 1.0, 4.0]];
        let x = [1.0, -2.0, 0.5];
        let b = a.iter().map(|r| r.iter().zip(&x).map(|(p, q)| p * q).sum()).collect();
        for (got, want) in solve(a, b).iter().zip(x) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn chi_square_accepts_exact_counts() {
        assert!(chi_square_p(&[250, 250, 250, 250], &[0.25; 4]) > 0.99);
        assert!(chi_square_p(&[400, 200, 200, 200], &[0.25; 4]) < 1e-6);
    }
}
