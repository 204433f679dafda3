//! Closed-form rank-constrained optimum for `linreg_circulant`.
//!
//! Let `z_i = P_in x_i` and `s_i = P_out (y_i − W₀ x_i)` be the training
//! inputs and residual targets in the packed spectral bases. A rank-`k`
//! adapter contributes `Pᵀ_out D P_in` with `rank(D) <= k`, so the best
//! training loss solves reduced-rank regression:
//!
//! ```text
//! G = Σ z zᵀ,  Q = Σ z sᵀ                     (normal equations: Dᵀ = G⁻¹Q)
//! Dᵀ_k = G^{-1/2} · trunc_k(G^{-1/2} Q)      (Eckart–Young in the whitened basis)
//! ```
//!
//! The whitening makes the truncation exact for any input covariance. The
//! resulting update is mapped back to the spatial basis and scored on the
//! clean train and test splits.

use serde::{Deserialize, Serialize};

use crate::adapters::{AdapterConfig, Mode};
use crate::error::{Error, Result};
use crate::lowrank::{low_rank_approx, svd};
use crate::numerics::{matmul, matvec, Matrix};
use crate::spectral::{packed_dft_matrix, SpectrumPlan};
use crate::training::task::{Dataset, Sample, Target, TaskKind, TaskSpec};

/// Ridge added to the Gram eigenvalues when the normal equations are singular.
pub const RIDGE_LAMBDA: f64 = 1e-8;

/// Relative eigenvalue floor below which the Gram matrix counts as singular.
const SINGULAR_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub rank: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    /// Set when the ridge fallback was needed.
    pub ridge_fallback: bool,
}

/// Optimal loss achievable by an adapter of `acfg.rank` on `spec`.
///
/// A frozen adapter, or a frequency adapter with `alpha == 0`, can only
/// represent the zero update and gets the rank-0 oracle.
pub fn closed_form_oracle(spec: &TaskSpec, acfg: &AdapterConfig) -> Result<OracleReport> {
    if spec.kind != TaskKind::LinregCirculant {
        return Err(Error::InvalidConfig(
            "the closed-form oracle needs a linreg_circulant task".into(),
        ));
    }
    let data = Dataset::generate(spec)?;
    let rank = match acfg.mode {
        Mode::Frozen => 0,
        Mode::FreqLora if acfg.alpha == 0.0 => 0,
        _ => acfg.rank,
    };
    oracle_for_rank(&data, rank)
}

/// Rank-`rank` oracle on an existing dataset; `rank == 0` scores `W₀` alone.
pub fn oracle_for_rank(data: &Dataset, rank: usize) -> Result<OracleReport> {
    let n = data.spec.dim;
    if data.spec.kind != TaskKind::LinregCirculant {
        return Err(Error::InvalidConfig(
            "the closed-form oracle needs a linreg_circulant task".into(),
        ));
    }
    if rank > n {
        return Err(Error::RankOutOfRange { rank, max: n });
    }
    let p = packed_dft_matrix(&SpectrumPlan::new(n)?);

    let mut gram = Matrix::zeros(n, n);
    let mut cross = Matrix::zeros(n, n);
    for s in &data.train {
        let Target::Values(y) = &s.target else {
            return Err(Error::InvalidConfig(
                "regression oracle needs real-valued targets".into(),
            ));
        };
        let z = matvec(&p, &s.x)?;
        let resid = y.sub(&matvec(&data.w0, &s.x)?);
        let r = matvec(&p, &resid)?;
        gram.add_outer(1.0, &z, &z);
        cross.add_outer(1.0, &z, &r);
    }

    let eig = svd(&gram)?;
    let top = eig.sigma[0];
    let ridge_fallback = eig.sigma[n - 1] <= SINGULAR_RATIO * top;
    let shift = if ridge_fallback { RIDGE_LAMBDA } else { 0.0 };
    let inv_sqrt: Vec<f64> = eig.sigma.iter().map(|l| 1.0 / (l + shift).sqrt()).collect();
    let g_inv_sqrt = Matrix::from_fn(n, n, |i, j| {
        (0..n)
            .map(|k| eig.u[(i, k)] * inv_sqrt[k] * eig.u[(j, k)])
            .sum()
    });

    let whitened = matmul(&g_inv_sqrt, &cross)?;
    let truncated = low_rank_approx(&whitened, rank)?;
    let d_t = matmul(&g_inv_sqrt, &truncated)?;
    let delta = matmul(&matmul(&p.transpose(), &d_t.transpose())?, &p)?;
    let weight = data.w0.add(&delta)?;

    Ok(OracleReport {
        rank,
        train_loss: mse(&weight, &data.train)?,
        test_loss: mse(&weight, &data.test)?,
        ridge_fallback,
    })
}

fn mse(weight: &Matrix, samples: &[Sample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let Target::Values(y) = &s.target else {
            return Err(Error::InvalidConfig(
                "regression oracle needs real-valued targets".into(),
            ));
        };
        let pred = matvec(weight, &s.x)?;
        total += pred.sub(y).iter().map(|d| d * d).sum::<f64>() / y.len() as f64;
    }
    Ok(total / samples.len() as f64)
}
