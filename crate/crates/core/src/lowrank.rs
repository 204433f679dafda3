//! Small dense SVD (one-sided Jacobi) and rank-k truncation.

use crate::error::{Error, Result};
use crate::numerics::{matmul, Matrix};

/// Largest row or column count accepted by [`svd`].
pub const MAX_SVD_DIM: usize = 512;

const MAX_SWEEPS: usize = 80;

/// `m = u · diag(sigma) · vt`, with `p = min(rows, cols)` singular values in
/// descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub vt: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let p = self.sigma.len();
        let us = Matrix::from_fn(self.u.rows(), p, |i, j| self.u[(i, j)] * self.sigma[j]);
        matmul(&us, &self.vt).expect("svd factor shapes agree")
    }

    /// `Σ_{i >= k} σ_i²`, the squared Frobenius residual of the rank-k truncation.
    pub fn tail_energy(&self, k: usize) -> f64 {
        self.sigma.iter().skip(k).map(|s| s * s).sum()
    }
}

/// Rank-k factors with `m ≈ l_k · r_kᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedFactors {
    /// `rows x k`.
    pub l_k: Matrix,
    /// `cols x k`.
    pub r_k: Matrix,
    pub k: usize,
}

impl TruncatedFactors {
    pub fn product(&self) -> Matrix {
        matmul(&self.l_k, &self.r_k.transpose()).expect("truncated factor shapes agree")
    }
}

/// Thin SVD by one-sided (Hestenes) Jacobi rotations.
///
/// Columns of `u` belonging to numerically zero singular values are
/// completed to an orthonormal set. Each `u` column is signed so that its
/// first entry above `1e-12` in magnitude is positive, and ties in `sigma`
/// keep their original column order, so the output is deterministic.
pub fn svd(m: &Matrix) -> Result<SvdResult> {
    let (rows, cols) = m.shape();
    if rows > MAX_SVD_DIM || cols > MAX_SVD_DIM {
        return Err(Error::SizeLimit {
            rows,
            cols,
            limit: MAX_SVD_DIM,
        });
    }
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidConfig(format!(
            "cannot decompose a {rows}x{cols} matrix"
        )));
    }
    if rows >= cols {
        Ok(jacobi_tall(m))
    } else {
        let t = jacobi_tall(&m.transpose());
        let mut out = SvdResult {
            u: t.vt.transpose(),
            sigma: t.sigma,
            vt: t.u.transpose(),
        };
        fix_signs(&mut out);
        Ok(out)
    }
}

fn jacobi_tall(m: &Matrix) -> SvdResult {
    let (rows, cols) = m.shape();
    // Column-major working copies.
    let mut a: Vec<Vec<f64>> = (0..cols).map(|j| m.column(j).into_vec()).collect();
    let mut v: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..cols).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let tol = f64::EPSILON * rows as f64;

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha: f64 = a[p].iter().map(|x| x * x).sum();
                let beta: f64 = a[q].iter().map(|x| x * x).sum();
                let gamma: f64 = a[p].iter().zip(&a[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = a
        .iter()
        .map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let sigma_max = norms[order[0]];
    let negligible = sigma_max * 1e-13;

    let mut u = Matrix::zeros(rows, cols);
    let mut vt = Matrix::zeros(cols, cols);
    let mut sigma = Vec::with_capacity(cols);
    let mut deficient = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let s = norms[src];
        sigma.push(s);
        if s > negligible && s > 0.0 {
            for i in 0..rows {
                u[(i, dst)] = a[src][i] / s;
            }
        } else {
            deficient.push(dst);
        }
        for i in 0..cols {
            vt[(dst, i)] = v[src][i];
        }
    }
    complete_columns(&mut u, &deficient);
    let mut out = SvdResult { u, sigma, vt };
    fix_signs(&mut out);
    out
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills the listed (zero) columns of `u` with unit vectors orthogonal to
/// every other column, using the standard basis vector that survives
/// Gram–Schmidt with the largest norm.
fn complete_columns(u: &mut Matrix, deficient: &[usize]) {
    let rows = u.rows();
    let mut filled: Vec<usize> = (0..u.cols()).filter(|j| !deficient.contains(j)).collect();
    for &j in deficient {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for e in 0..rows {
            let mut cand = vec![0.0; rows];
            cand[e] = 1.0;
            for _ in 0..2 {
                for &f in &filled {
                    let proj: f64 = (0..rows).map(|i| u[(i, f)] * cand[i]).sum();
                    for (i, c) in cand.iter_mut().enumerate() {
                        *c -= proj * u[(i, f)];
                    }
                }
            }
            let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
            if best.as_ref().is_none_or(|(b, _)| norm > *b + 1e-12) {
                best = Some((norm, cand));
            }
        }
        let (norm, cand) = best.expect("rows > 0");
        for (i, c) in cand.iter().enumerate() {
            u[(i, j)] = c / norm;
        }
        filled.push(j);
    }
}

fn fix_signs(svd: &mut SvdResult) {
    let (rows, p) = svd.u.shape();
    for j in 0..p {
        let lead = (0..rows).map(|i| svd.u[(i, j)]).find(|x| x.abs() > 1e-12);
        if matches!(lead, Some(x) if x < 0.0) {
            for i in 0..rows {
                svd.u[(i, j)] = -svd.u[(i, j)];
            }
            for c in 0..svd.vt.cols() {
                svd.vt[(j, c)] = -svd.vt[(j, c)];
            }
        }
    }
}

/// Keeps the top `k` singular triplets, splitting `σ` evenly:
/// `l_k = u_k · diag(√σ)`, `r_k = v_k · diag(√σ)`.
pub fn truncate(s: &SvdResult, k: usize) -> Result<TruncatedFactors> {
    let p = s.sigma.len();
    if k == 0 || k > p {
        return Err(Error::RankOutOfRange { rank: k, max: p });
    }
    let root: Vec<f64> = s.sigma[..k].iter().map(|x| x.sqrt()).collect();
    let l_k = Matrix::from_fn(s.u.rows(), k, |i, j| s.u[(i, j)] * root[j]);
    let r_k = Matrix::from_fn(s.vt.cols(), k, |i, j| s.vt[(j, i)] * root[j]);
    Ok(TruncatedFactors { l_k, r_k, k })
}

/// Best rank-`k` approximation of `m` in Frobenius norm; `k == 0` gives zero.
pub fn low_rank_approx(m: &Matrix, k: usize) -> Result<Matrix> {
    if k == 0 {
        return Ok(Matrix::zeros(m.rows(), m.cols()));
    }
    let s = svd(m)?;
    Ok(truncate(&s, k.min(s.sigma.len()))?.product())
}
