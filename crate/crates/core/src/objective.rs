//! Contrastive critic objectives over a square logits matrix.
//!
//! Row `i` holds the scores of state-action `i` against every goal in the
//! batch; the diagonal entries are the positives. Every loss is reduced by a
//! mean (over rows, or over all `(i, j)` pairs for the pairwise
//! preference-style losses) and returns the exact gradient w.r.t. the logits.

use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::real::{lane_max, lane_sum, sigmoid, softplus, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossKind {
    InfoNceFwd,
    InfoNceBwd,
    InfoNceSym,
    FlatNceFwd,
    FlatNceBwd,
    FlatNceSym,
    ForwardBackward,
    Dpo,
    Ipo,
    Sppo,
    NceBinary,
}

impl LossKind {
    pub const ALL: [LossKind; 11] = [
        LossKind::InfoNceFwd,
        LossKind::InfoNceBwd,
        LossKind::InfoNceSym,
        LossKind::FlatNceFwd,
        LossKind::FlatNceBwd,
        LossKind::FlatNceSym,
        LossKind::ForwardBackward,
        LossKind::Dpo,
        LossKind::Ipo,
        LossKind::Sppo,
        LossKind::NceBinary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::InfoNceFwd => "infonce_fwd",
            LossKind::InfoNceBwd => "infonce_bwd",
            LossKind::InfoNceSym => "symmetric_infonce",
            LossKind::FlatNceFwd => "flatnce_fwd",
            LossKind::FlatNceBwd => "flatnce_bwd",
            LossKind::FlatNceSym => "flatnce_sym",
            LossKind::ForwardBackward => "forward_backward",
            LossKind::Dpo => "dpo",
            LossKind::Ipo => "ipo",
            LossKind::Sppo => "sppo",
            LossKind::NceBinary => "nce_binary",
        }
    }

    /// The FlatNCE family has an identically zero value; only its gradient
    /// carries signal.
    pub fn is_flat(self) -> bool {
        matches!(self, LossKind::FlatNceFwd | LossKind::FlatNceBwd | LossKind::FlatNceSym)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| *c != '_' && *c != '-')
            .map(|c| c.to_ascii_lowercase())
            .collect();
        Ok(match key.as_str() {
            "infoncefwd" | "fwdinfonce" | "forwardinfonce" | "infonce" => LossKind::InfoNceFwd,
            "infoncebwd" | "bwdinfonce" | "backwardinfonce" => LossKind::InfoNceBwd,
            "symmetricinfonce" | "syminfonce" | "infoncesym" => LossKind::InfoNceSym,
            "flatncefwd" | "flatnce" | "fwdflatnce" => LossKind::FlatNceFwd,
            "flatncebwd" | "flatncebackward" | "bwdflatnce" => LossKind::FlatNceBwd,
            "flatncesym" | "symflatnce" | "symmetricflatnce" => LossKind::FlatNceSym,
            "fb" | "forwardbackward" => LossKind::ForwardBackward,
            "dpo" => LossKind::Dpo,
            "ipo" => LossKind::Ipo,
            "sppo" => LossKind::Sppo,
            "ncebinary" | "binarynce" | "nce" => LossKind::NceBinary,
            _ => return Err(Error::Invalid(format!("unknown contrastive loss `{s}`"))),
        })
    }
}

fn check_logits<T: Real>(logits: &Matrix<T>) -> Result<usize> {
    let (r, c) = logits.shape();
    if r != c {
        return Err(Error::Shape {
            op: "critic_loss",
            lhs: (r, c),
            rhs: (r, r),
        });
    }
    if r < 2 {
        return Err(Error::BatchTooSmall(r));
    }
    if !logits.is_finite() {
        return Err(Error::NonFinite(String::from("logits")));
    }
    Ok(r)
}

/// Value and gradient of the chosen objective.
pub fn critic_loss<T: Real>(kind: LossKind, logits: &Matrix<T>) -> Result<(T, Matrix<T>)> {
    let b = check_logits(logits)?;
    let bt = T::lit(b as f64);
    Ok(match kind {
        LossKind::InfoNceFwd => infonce_rows(logits),
        LossKind::InfoNceBwd => infonce_cols(logits),
        LossKind::InfoNceSym => {
            let (vf, gf) = critic_loss(LossKind::InfoNceFwd, logits)?;
            let (vb, gb) = critic_loss(LossKind::InfoNceBwd, logits)?;
            (vf + vb, add(&gf, &gb))
        }
        LossKind::FlatNceFwd => (T::zero(), flatnce_rows(logits)),
        LossKind::FlatNceBwd => (T::zero(), flatnce_rows(&logits.transpose()).transpose()),
        LossKind::FlatNceSym => {
            let (_, gf) = critic_loss(LossKind::FlatNceFwd, logits)?;
            let (_, gb) = critic_loss(LossKind::FlatNceBwd, logits)?;
            (T::zero(), add(&gf, &gb))
        }
        LossKind::ForwardBackward => {
            let c = T::one() / T::lit(2.0 * (b as f64 - 1.0));
            let mut total = T::zero();
            let mut g = Matrix::zeros(b, b);
            for i in 0..b {
                let row = logits.row(i);
                let mut term = -row[i].exp();
                let grow = g.row_mut(i);
                grow[i] = -row[i].exp() / bt;
                for j in 0..b {
                    if j != i {
                        let e2 = (T::lit(2.0) * row[j]).exp();
                        term += c * e2;
                        grow[j] = T::lit(2.0) * c * e2 / bt;
                    }
                }
                total += term;
            }
            (total / bt, g)
        }
        LossKind::Dpo | LossKind::Ipo => {
            let pairs = bt * bt;
            let mut total = T::zero();
            let mut g = Matrix::zeros(b, b);
            for i in 0..b {
                let row = logits.row(i);
                let mut diag_grad = T::zero();
                for j in 0..b {
                    let x = row[i] - row[j];
                    let (value, slope) = if kind == LossKind::Dpo {
                        // −log σ(x) and its derivative σ(x) − 1.
                        (softplus(-x), sigmoid(x) - T::one())
                    } else {
                        let d = x - T::one();
                        (d * d, T::lit(2.0) * d)
                    };
                    total += value;
                    if j != i {
                        diag_grad += slope / pairs;
                        g.row_mut(i)[j] = -slope / pairs;
                    }
                }
                g.row_mut(i)[i] = diag_grad;
            }
            (total / pairs, g)
        }
        LossKind::Sppo => {
            let pairs = bt * bt;
            let mut total = T::zero();
            let mut g = Matrix::zeros(b, b);
            for i in 0..b {
                let row = logits.row(i);
                let pos = row[i] - T::one();
                for j in 0..b {
                    let neg = row[j] + T::one();
                    total += pos * pos + neg * neg;
                    g.row_mut(i)[j] = T::lit(2.0) * neg / pairs;
                }
                g.row_mut(i)[i] += T::lit(2.0) * pos * bt / pairs;
            }
            (total / pairs, g)
        }
        LossKind::NceBinary => {
            let mut total = T::zero();
            let mut g = Matrix::zeros(b, b);
            for i in 0..b {
                let row = logits.row(i);
                let grow = g.row_mut(i);
                for j in 0..b {
                    if j == i {
                        total += softplus(-row[j]);
                        grow[j] = (sigmoid(row[j]) - T::one()) / bt;
                    } else {
                        total += softplus(row[j]);
                        grow[j] = sigmoid(row[j]) / bt;
                    }
                }
            }
            (total / bt, g)
        }
    })
}

fn add<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let mut out = a.clone();
    for (o, &v) in out.data_mut().iter_mut().zip(b.data()) {
        *o += v;
    }
    out
}

/// Row-wise InfoNCE: mean over rows of `logsumexp(row) − row[i]`.
fn infonce_rows<T: Real>(logits: &Matrix<T>) -> (T, Matrix<T>) {
    let b = logits.rows();
    let bt = T::lit(b as f64);
    let mut total = T::zero();
    let mut g = Matrix::zeros(b, b);
    for i in 0..b {
        let row = logits.row(i);
        let m = lane_max(row);
        let grow = g.row_mut(i);
        for (o, &v) in grow.iter_mut().zip(row) {
            *o = (v - m).exp_kernel();
        }
        let s = lane_sum(grow);
        total += m + s.ln() - row[i];
        let scale = T::one() / (s * bt);
        for o in grow.iter_mut() {
            *o *= scale;
        }
        grow[i] -= T::one() / bt;
    }
    (total / bt, g)
}

/// Column-wise InfoNCE: mean over columns of `logsumexp(col) − col[j]`.
/// Sweeps rows so every step is elementwise across a row.
fn infonce_cols<T: Real>(logits: &Matrix<T>) -> (T, Matrix<T>) {
    let b = logits.rows();
    let bt = T::lit(b as f64);
    let mut m = alloc::vec![T::neg_infinity(); b];
    for i in 0..b {
        for (mj, &v) in m.iter_mut().zip(logits.row(i)) {
            *mj = mj.max(v);
        }
    }
    let mut g = Matrix::zeros(b, b);
    let mut s = alloc::vec![T::zero(); b];
    for i in 0..b {
        let grow = g.row_mut(i);
        for (((o, &v), &mj), sj) in grow.iter_mut().zip(logits.row(i)).zip(&m).zip(s.iter_mut()) {
            *o = (v - mj).exp_kernel();
            *sj += *o;
        }
    }
    let mut total = T::zero();
    for j in 0..b {
        total += m[j] + s[j].ln() - logits.get(j, j);
    }
    let scale: alloc::vec::Vec<T> = s.iter().map(|&sj| T::one() / (sj * bt)).collect();
    for i in 0..b {
        let grow = g.row_mut(i);
        for (o, &c) in grow.iter_mut().zip(&scale) {
            *o *= c;
        }
        grow[i] -= T::one() / bt;
    }
    (total / bt, g)
}

/// Gradient of the row-wise FlatNCE objective.
fn flatnce_rows<T: Real>(logits: &Matrix<T>) -> Matrix<T> {
    let b = logits.rows();
    let bt = T::lit(b as f64);
    let mut g = Matrix::zeros(b, b);
    for i in 0..b {
        let row = logits.row(i);
        let pos = row[i];
        let m = row.iter().map(|&v| v - pos).fold(T::neg_infinity(), T::max);
        let grow = g.row_mut(i);
        let mut s = T::zero();
        for (o, &v) in grow.iter_mut().zip(row) {
            *o = ((v - pos) - m).exp();
            s += *o;
        }
        for (j, o) in grow.iter_mut().enumerate() {
            let p = *o / s;
            *o = if j == i { (p - T::one()) / bt } else { p / bt };
        }
    }
    g
}

/// Reference gradient of `mean_i log Σⱼ exp(logits[i][j] − logits[i][i])`,
/// the quantity whose detached ratio forms the forward FlatNCE loss.
pub fn flatnce_grad_oracle<T: Real>(logits: &Matrix<T>) -> Result<Matrix<T>> {
    let b = check_logits(logits)?;
    let bt = T::lit(b as f64);
    let mut out = Matrix::zeros(b, b);
    for i in 0..b {
        let shifted: alloc::vec::Vec<T> = (0..b).map(|j| logits.get(i, j) - logits.get(i, i)).collect();
        let mut top = T::neg_infinity();
        for &v in &shifted {
            top = top.max(v);
        }
        let weights: alloc::vec::Vec<T> = shifted.iter().map(|&v| (v - top).exp()).collect();
        let mut norm = T::zero();
        for &w in &weights {
            norm += w;
        }
        for j in 0..b {
            let p = weights[j] / norm;
            let v = if i == j { (p - T::one()) / bt } else { p / bt };
            out.set(i, j, v);
        }
    }
    Ok(out)
}

/// Non-detached forward FlatNCE surrogate `mean_i log Σⱼ exp(lᵢⱼ − lᵢᵢ)`.
pub fn flatnce_surrogate<T: Real>(logits: &Matrix<T>) -> Result<T> {
    let b = check_logits(logits)?;
    let mut total = T::zero();
    for i in 0..b {
        let row = logits.row(i);
        let m = row.iter().map(|&v| v - row[i]).fold(T::neg_infinity(), T::max);
        let s: T = row.iter().map(|&v| (v - row[i] - m).exp()).sum();
        total += m + s.ln();
    }
    Ok(total / T::lit(b as f64))
}

/// `beta · mean_i (logsumexp_j logits[i][j])²` and its gradient.
pub fn logsumexp_penalty<T: Real>(logits: &Matrix<T>, beta: f64) -> Result<(T, Matrix<T>)> {
    let b = check_logits(logits)?;
    if beta < 0.0 {
        return Err(Error::Invalid(format!("logsumexp penalty must be >= 0, got {beta}")));
    }
    let mut g = Matrix::zeros(b, b);
    if beta == 0.0 {
        return Ok((T::zero(), g));
    }
    let beta_t = T::lit(beta);
    let bt = T::lit(b as f64);
    let mut total = T::zero();
    for i in 0..b {
        let row = logits.row(i);
        let m = lane_max(row);
        let grow = g.row_mut(i);
        for (o, &v) in grow.iter_mut().zip(row) {
            *o = (v - m).exp_kernel();
        }
        let s = lane_sum(grow);
        let lse = m + s.ln();
        total += lse * lse;
        let scale = beta_t * T::lit(2.0) * lse / (bt * s);
        for o in grow.iter_mut() {
            *o *= scale;
        }
    }
    Ok((beta_t * total / bt, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_diff_grad, max_rel_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LN2: f64 = core::f64::consts::LN_2;

    fn random(b: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
        Matrix::from_fn(b, b, |_, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn zero_logit_closed_forms() {
        let z = Matrix::<f64>::zeros(2, 2);
        let v = |k| critic_loss(k, &z).unwrap().0;
        assert!((v(LossKind::InfoNceFwd) - LN2).abs() < 1e-12);
        assert!((v(LossKind::InfoNceSym) - 2.0 * LN2).abs() < 1e-12);
        assert!((v(LossKind::Dpo) - LN2).abs() < 1e-12);
        assert!((v(LossKind::Ipo) - 1.0).abs() < 1e-12);
        assert!((v(LossKind::Sppo) - 2.0).abs() < 1e-12);
        assert!((v(LossKind::ForwardBackward) + 0.5).abs() < 1e-12);
        assert!((v(LossKind::NceBinary) - 2.0 * LN2).abs() < 1e-12);
        assert_eq!(v(LossKind::FlatNceFwd), 0.0);
        let (p, _) = logsumexp_penalty(&z, 0.1).unwrap();
        assert!((p - 0.1 * LN2 * LN2).abs() < 1e-12);
    }

    #[test]
    fn softmax_reference_value() {
        let l = Matrix::from_rows(&[[1.0f64, 0.0], [0.0, 1.0]]).unwrap();
        let (v, _) = critic_loss(LossKind::InfoNceFwd, &l).unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 0.3133).abs() < 1e-4);
    }

    #[test]
    fn batch_of_one_is_rejected() {
        let l = Matrix::<f32>::zeros(1, 1);
        for kind in LossKind::ALL {
            assert!(matches!(critic_loss(kind, &l), Err(Error::BatchTooSmall(1))));
        }
    }

    #[test]
    fn penalty_beta_zero_is_inert() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (v, g) = logsumexp_penalty(&random(4, &mut rng), 0.0).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn flat_oracle_on_zero_logits() {
        let g = flatnce_grad_oracle(&Matrix::<f64>::zeros(2, 2)).unwrap();
        assert_eq!(g.data(), &[-0.25, 0.25, 0.25, -0.25]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for kind in LossKind::ALL {
            for _ in 0..5 {
                let l = random(5, &mut rng);
                let (_, g) = critic_loss(kind, &l).unwrap();
                let f = |v: &[f64]| {
                    let m = Matrix::from_vec(5, 5, v.to_vec()).unwrap();
                    match kind {
                        LossKind::FlatNceFwd => flatnce_surrogate(&m).unwrap(),
                        LossKind::FlatNceBwd => flatnce_surrogate(&m.transpose()).unwrap(),
                        LossKind::FlatNceSym => {
                            flatnce_surrogate(&m).unwrap() + flatnce_surrogate(&m.transpose()).unwrap()
                        }
                        _ => critic_loss(kind, &m).unwrap().0,
                    }
                };
                let n = finite_diff_grad(f, l.data(), 1e-6);
                assert!(max_rel_error(g.data(), &n) < 1e-4, "{kind}");
            }
        }
        for _ in 0..5 {
            let l = random(6, &mut rng);
            let (_, g) = logsumexp_penalty(&l, 0.1).unwrap();
            let n = finite_diff_grad(
                |v: &[f64]| logsumexp_penalty(&Matrix::from_vec(6, 6, v.to_vec()).unwrap(), 0.1).unwrap().0,
                l.data(),
                1e-6,
            );
            assert!(max_rel_error(g.data(), &n) < 1e-4);
        }
    }

    #[test]
    fn flat_forward_gradient_is_the_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let l = random(7, &mut rng);
            let (v, g) = critic_loss(LossKind::FlatNceFwd, &l).unwrap();
            assert_eq!(v, 0.0);
            assert_eq!(g, flatnce_grad_oracle(&l).unwrap());
        }
    }

    #[test]
    fn parse_names() {
        for kind in LossKind::ALL {
            assert_eq!(kind.name().parse::<LossKind>().unwrap(), kind);
        }
        assert_eq!("sym_infonce".parse::<LossKind>().unwrap(), LossKind::InfoNceSym);
        assert!("triplet".parse::<LossKind>().is_err());
    }
}
