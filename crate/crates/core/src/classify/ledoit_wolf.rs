//! Ledoit-Wolf shrinkage toward a scaled identity.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spd::{symmetrize, SpdMatrix, DEFAULT_EIGEN_FLOOR};

/// Shrinkage estimate and the intensity that produced it.
#[derive(Clone, Debug)]
pub struct LedoitWolf {
    pub covariance: SpdMatrix,
    /// Weight on the scaled identity, in `[0, 1]`.
    pub shrinkage: f64,
}

/// Ledoit-Wolf estimate from the rows of `samples` (`N × n`).
///
/// Uses the biased empirical covariance `S = XᵀX/N` of the centered data and
/// returns `(1 − δ) S + δ (Tr S / n) I`.
pub fn ledoit_wolf(samples: &DMatrix<f64>) -> Result<SpdMatrix> {
    ledoit_wolf_with_shrinkage(samples).map(|lw| lw.covariance)
}

pub fn ledoit_wolf_with_shrinkage(samples: &DMatrix<f64>) -> Result<LedoitWolf> {
    let (rows, n) = samples.shape();
    if rows < 2 {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: format!("need at least 2 rows, got {rows}"),
        });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: "contains non-finite values".into(),
        });
    }
    let count = rows as f64;
    let mean: DVector<f64> = samples.row_mean().transpose();
    let mut centered = samples.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let emp = symmetrize(&(centered.tr_mul(&centered) / count));
    let scale = emp.trace() / n as f64;
    if !(scale > 0.0) {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: "all columns are constant".into(),
        });
    }
    let target_gap = (&emp - DMatrix::identity(n, n) * scale).norm_squared() / n as f64;
    // (1/N²) Σ_k ‖x_k x_kᵀ − S‖²_F = (Σ_k ‖x_k‖⁴ − N‖S‖²_F) / N²
    let fourth: f64 = centered.row_iter().map(|r| r.norm_squared().powi(2)).sum();
    let spread = ((fourth - count * emp.norm_squared()) / (count * count) / n as f64).max(0.0);
    let shrinkage = if target_gap > 0.0 {
        (spread.min(target_gap) / target_gap).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let blended = &emp * (1.0 - shrinkage) + DMatrix::identity(n, n) * (shrinkage * scale);
    let covariance = SpdMatrix::clamped(blended, DEFAULT_EIGEN_FLOOR * scale.max(1.0))?;
    Ok(LedoitWolf {
        covariance,
        shrinkage,
    })
}
