//! Optimistic Gaussian likelihoods.
//!
//! Given observations and a nominal Gaussian, the optimistic likelihood is the
//! largest log-likelihood attained by any Gaussian in an ambiguity ball around
//! the nominal one. This crate provides:
//!
//! * [`spd`]: symmetric and SPD matrices with cached eigendecompositions.
//! * [`fr`]: Fisher-Rao geometry on the SPD cone (distance, geodesics,
//!   exponential and logarithm maps, projection onto a ball).
//! * [`fr_solver`]: projected geodesic gradient descent for the Fisher-Rao ball.
//! * [`kl_solver`]: the KL ball via its one-dimensional dual.
//! * [`mean_solver`]: balls over the mean with a fixed covariance.
//! * [`classify`]: QDA and the flexible discriminant rules built on the solvers.
//! * [`bench`]: datasets, experiment drivers and the `optilik` command line.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod classify;
pub mod error;
pub mod fr;
pub mod fr_solver;
pub mod kl_solver;
pub mod mean_solver;
pub mod rng;
mod root;
pub mod spd;

pub use error::{Error, Result};
pub use fr::{exp_map, fr_distance, geodesic, log_map, metric_inner, FrBall};
pub use fr_solver::{optimistic_loglik_fr, FrProblem, FrSolverOptions, SolveReport, StepMode};
pub use kl_solver::{kl_divergence, optimistic_loglik_kl, KlProblem, KlSolution};
pub use mean_solver::{optimistic_loglik_mean, MeanProblem, MeanRadius, MeanSolution};
pub use spd::{SpdMatrix, SymMatrix};

/// Library version, embedded in output metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[cfg(test)]
pub(crate) mod testutil {
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use crate::spd::SpdMatrix;

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    pub fn gaussian_matrix(r: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| r.sample(StandardNormal))
    }

    pub fn gaussian_vector(r: &mut impl Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| r.sample(StandardNormal))
    }

    /// Random rotation with log-uniform eigenvalues in `[lo, hi]`.
    pub fn random_spd(r: &mut impl Rng, n: usize, lo: f64, hi: f64) -> SpdMatrix {
        let q = gaussian_matrix(r, n, n).qr().q();
        let diag = DVector::from_fn(n, |_, _| (r.random_range(lo.ln()..=hi.ln())).exp());
        let m = &q * DMatrix::from_diagonal(&diag) * q.transpose();
        SpdMatrix::new((&m + m.transpose()) * 0.5).unwrap()
    }
}
