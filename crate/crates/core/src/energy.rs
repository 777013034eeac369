//! Critic energy functions `f(φ(s,a), ψ(g))` and their vector-Jacobian
//! products.
//!
//! Metric energies are negated distances, so larger is more similar for
//! every kind. Norms used as divisors are clamped below by [`NORM_EPS`]; the
//! forward value of `L2` is the exact distance, only its gradient uses the
//! clamped norm.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::real::Real;

pub const NORM_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnergyKind {
    Cosine,
    Dot,
    L1,
    L2,
    L2NoSqrt,
}

impl EnergyKind {
    pub const ALL: [EnergyKind; 5] = [
        EnergyKind::Cosine,
        EnergyKind::Dot,
        EnergyKind::L1,
        EnergyKind::L2,
        EnergyKind::L2NoSqrt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnergyKind::Cosine => "cosine",
            EnergyKind::Dot => "dot",
            EnergyKind::L1 => "l1",
            EnergyKind::L2 => "l2",
            EnergyKind::L2NoSqrt => "l2_no_sqrt",
        }
    }
}

impl fmt::Display for EnergyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnergyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: alloc::string::String = s
            .chars()
            .filter(|c| *c != '_' && *c != '-')
            .map(|c| c.to_ascii_lowercase())
            .collect();
        Ok(match norm.as_str() {
            "cos" | "cosine" => EnergyKind::Cosine,
            "dot" => EnergyKind::Dot,
            "l1" => EnergyKind::L1,
            "l2" => EnergyKind::L2,
            "l2nosqrt" | "l2wosqrt" => EnergyKind::L2NoSqrt,
            _ => return Err(Error::Invalid(alloc::format!("unknown energy function `{s}`"))),
        })
    }
}

fn check_pair<T: Real>(op: &'static str, phi: &Matrix<T>, psi: &Matrix<T>) -> Result<()> {
    if phi.shape() != psi.shape() {
        return Err(Error::Shape {
            op,
            lhs: phi.shape(),
            rhs: psi.shape(),
        });
    }
    Ok(())
}

fn row_norms<T: Real>(m: &Matrix<T>) -> Vec<T> {
    (0..m.rows())
        .map(|i| m.row(i).iter().map(|&v| v * v).sum::<T>().sqrt())
        .collect()
}

/// Rows divided by their clamped norms.
fn normalized<T: Real>(m: &Matrix<T>, norms: &[T]) -> Matrix<T> {
    let eps = T::lit(NORM_EPS);
    let mut out = m.clone();
    for (i, &n) in norms.iter().enumerate() {
        let d = n.max(eps);
        for v in out.row_mut(i) {
            *v = *v / d;
        }
    }
    out
}

/// Per-pair accumulation `acc[i][j] = Σ_k term(φ[i][k] − ψ[j][k])`, k ascending.
fn pairwise_sum<T: Real>(phi: &Matrix<T>, psi: &Matrix<T>, term: impl Fn(T) -> T) -> Matrix<T> {
    let (b, d) = phi.shape();
    let psi_t = psi.transpose();
    let mut out = Matrix::zeros(b, b);
    for i in 0..b {
        let acc = out.row_mut(i);
        let prow = phi.row(i);
        for k in 0..d {
            let a = prow[k];
            for (o, &q) in acc.iter_mut().zip(psi_t.row(k)) {
                *o += term(a - q);
            }
        }
    }
    out
}

/// Logits matrix `logits[i][j] = f(φᵢ, ψⱼ)`.
pub fn energy_matrix<T: Real>(kind: EnergyKind, phi: &Matrix<T>, psi: &Matrix<T>) -> Result<Matrix<T>> {
    check_pair("energy_matrix", phi, psi)?;
    Ok(match kind {
        EnergyKind::Dot => phi.matmul_t(psi)?,
        EnergyKind::Cosine => {
            let a = normalized(phi, &row_norms(phi));
            let b = normalized(psi, &row_norms(psi));
            a.matmul_t(&b)?.map(|v| v.max(-T::one()).min(T::one()))
        }
        EnergyKind::L1 => pairwise_sum(phi, psi, |x| x.abs()).map(|v| -v),
        EnergyKind::L2 => pairwise_sum(phi, psi, |x| x * x).map(|v| -v.sqrt()),
        EnergyKind::L2NoSqrt => pairwise_sum(phi, psi, |x| x * x).map(|v| -v),
    })
}

/// Gradients of `Σ dlogits ⊙ energy_matrix(kind, φ, ψ)` w.r.t. φ and ψ.
pub fn energy_backward<T: Real>(
    kind: EnergyKind,
    phi: &Matrix<T>,
    psi: &Matrix<T>,
    dlogits: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    check_pair("energy_backward", phi, psi)?;
    let b = phi.rows();
    if dlogits.shape() != (b, b) {
        return Err(Error::Shape {
            op: "energy_backward",
            lhs: dlogits.shape(),
            rhs: (b, b),
        });
    }
    match kind {
        EnergyKind::Dot => Ok((dlogits.matmul(psi)?, dlogits.t_matmul(phi)?)),
        EnergyKind::Cosine => {
            let na = row_norms(phi);
            let nb = row_norms(psi);
            let a = normalized(phi, &na);
            let bb = normalized(psi, &nb);
            let da = dlogits.matmul(&bb)?;
            let db = dlogits.t_matmul(&a)?;
            Ok((unnormalize_grad(&a, &na, da), unnormalize_grad(&bb, &nb, db)))
        }
        EnergyKind::L1 => {
            let d = phi.cols();
            let mut dphi = Matrix::zeros(b, d);
            let mut dpsi = Matrix::zeros(b, d);
            for i in 0..b {
                for j in 0..b {
                    let g = dlogits.get(i, j);
                    if g == T::zero() {
                        continue;
                    }
                    for k in 0..d {
                        let s = sign(phi.get(i, k) - psi.get(j, k));
                        dphi.row_mut(i)[k] -= g * s;
                        dpsi.row_mut(j)[k] += g * s;
                    }
                }
            }
            Ok((dphi, dpsi))
        }
        EnergyKind::L2 | EnergyKind::L2NoSqrt => {
            // dφᵢ = Σⱼ c_ij (φᵢ − ψⱼ), dψⱼ = −Σᵢ c_ij (φᵢ − ψⱼ).
            let coeff = if kind == EnergyKind::L2 {
                let dist = pairwise_sum(phi, psi, |x| x * x).map(|v| v.sqrt());
                let eps = T::lit(NORM_EPS);
                Matrix::from_fn(b, b, |i, j| -dlogits.get(i, j) / dist.get(i, j).max(eps))
            } else {
                dlogits.map(|g| T::lit(-2.0) * g)
            };
            let row_sum: Vec<T> = (0..b).map(|i| coeff.row(i).iter().copied().sum()).collect();
            let col_sum = coeff.column_sums();
            let mut dphi = coeff.matmul(psi)?;
            for i in 0..b {
                let r = phi.row(i);
                for (o, &p) in dphi.row_mut(i).iter_mut().zip(r) {
                    *o = row_sum[i] * p - *o;
                }
            }
            let mut dpsi = coeff.t_matmul(phi)?;
            for j in 0..b {
                let r = psi.row(j);
                for (o, &p) in dpsi.row_mut(j).iter_mut().zip(r) {
                    *o = col_sum[j] * p - *o;
                }
            }
            Ok((dphi, dpsi))
        }
    }
}

#[inline]
fn sign<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Pulls a gradient w.r.t. normalized rows back to the raw rows.
fn unnormalize_grad<T: Real>(unit: &Matrix<T>, norms: &[T], mut g: Matrix<T>) -> Matrix<T> {
    let eps = T::lit(NORM_EPS);
    for (i, &n) in norms.iter().enumerate() {
        let u = unit.row(i);
        let row = g.row_mut(i);
        if n > eps {
            let proj: T = u.iter().zip(row.iter()).map(|(&a, &b)| a * b).sum();
            for (o, &a) in row.iter_mut().zip(u) {
                *o = (*o - a * proj) / n;
            }
        } else {
            for o in row.iter_mut() {
                *o = *o / eps;
            }
        }
    }
    g
}

/// Matched-pair energies `f(φᵢ, ψᵢ)`, i.e. the diagonal of [`energy_matrix`].
pub fn energy_pairs<T: Real>(kind: EnergyKind, phi: &Matrix<T>, psi: &Matrix<T>) -> Result<Vec<T>> {
    check_pair("energy_pairs", phi, psi)?;
    Ok((0..phi.rows())
        .map(|i| pair_value(kind, phi.row(i), psi.row(i)))
        .collect())
}

/// Gradients of `Σᵢ dvals[i]·f(φᵢ, ψᵢ)`.
pub fn energy_pairs_backward<T: Real>(
    kind: EnergyKind,
    phi: &Matrix<T>,
    psi: &Matrix<T>,
    dvals: &[T],
) -> Result<(Matrix<T>, Matrix<T>)> {
    check_pair("energy_pairs_backward", phi, psi)?;
    if dvals.len() != phi.rows() {
        return Err(Error::Length {
            op: "energy_pairs_backward",
            expected: phi.rows(),
            found: dvals.len(),
        });
    }
    let mut dphi = Matrix::zeros(phi.rows(), phi.cols());
    let mut dpsi = Matrix::zeros(psi.rows(), psi.cols());
    for (i, &g) in dvals.iter().enumerate() {
        let (a, b) = (phi.row(i), psi.row(i));
        let mut ga = vec![T::zero(); a.len()];
        let mut gb = vec![T::zero(); b.len()];
        pair_grad(kind, a, b, g, &mut ga, &mut gb);
        dphi.row_mut(i).copy_from_slice(&ga);
        dpsi.row_mut(i).copy_from_slice(&gb);
    }
    Ok((dphi, dpsi))
}

fn pair_value<T: Real>(kind: EnergyKind, a: &[T], b: &[T]) -> T {
    let eps = T::lit(NORM_EPS);
    match kind {
        EnergyKind::Dot => a.iter().zip(b).map(|(&x, &y)| x * y).sum(),
        EnergyKind::Cosine => {
            let na = a.iter().map(|&x| x * x).sum::<T>().sqrt().max(eps);
            let nb = b.iter().map(|&x| x * x).sum::<T>().sqrt().max(eps);
            let dot: T = a.iter().zip(b).map(|(&x, &y)| (x / na) * (y / nb)).sum();
            dot.max(-T::one()).min(T::one())
        }
        EnergyKind::L1 => -a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum::<T>(),
        EnergyKind::L2 => -a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt(),
        EnergyKind::L2NoSqrt => -a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>(),
    }
}

fn pair_grad<T: Real>(kind: EnergyKind, a: &[T], b: &[T], g: T, ga: &mut [T], gb: &mut [T]) {
    let eps = T::lit(NORM_EPS);
    match kind {
        EnergyKind::Dot => {
            for k in 0..a.len() {
                ga[k] = g * b[k];
                gb[k] = g * a[k];
            }
        }
        EnergyKind::Cosine => {
            let ra = a.iter().map(|&x| x * x).sum::<T>().sqrt();
            let rb = b.iter().map(|&x| x * x).sum::<T>().sqrt();
            let (na, nb) = (ra.max(eps), rb.max(eps));
            let ua: Vec<T> = a.iter().map(|&x| x / na).collect();
            let ub: Vec<T> = b.iter().map(|&x| x / nb).collect();
            let c: T = ua.iter().zip(&ub).map(|(&x, &y)| x * y).sum();
            for k in 0..a.len() {
                ga[k] = if ra > eps {
                    g * (ub[k] - c * ua[k]) / na
                } else {
                    g * ub[k] / eps
                };
                gb[k] = if rb > eps {
                    g * (ua[k] - c * ub[k]) / nb
                } else {
                    g * ua[k] / eps
                };
            }
        }
        EnergyKind::L1 => {
            for k in 0..a.len() {
                let s = sign(a[k] - b[k]);
                ga[k] = -g * s;
                gb[k] = g * s;
            }
        }
        EnergyKind::L2 => {
            let dist = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt();
            let c = -g / dist.max(eps);
            for k in 0..a.len() {
                ga[k] = c * (a[k] - b[k]);
                gb[k] = -c * (a[k] - b[k]);
            }
        }
        EnergyKind::L2NoSqrt => {
            let c = T::lit(-2.0) * g;
            for k in 0..a.len() {
                ga[k] = c * (a[k] - b[k]);
                gb[k] = -c * (a[k] - b[k]);
            }
        }
    }
}
