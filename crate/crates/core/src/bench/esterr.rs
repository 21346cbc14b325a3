//! How far sample estimates land from the truth, measured by each divergence.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fr::fr_distance;
use crate::kl_solver::kl_divergence;
use crate::mean_solver::{fr_mean_distance, kl_mean_divergence};
use crate::rng::{stream, StreamTag};
use crate::spd::SpdMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationErrorConfig {
    pub seed: u64,
    pub trials: usize,
    pub dim: usize,
    pub sample_sizes: Vec<usize>,
}

impl Default for EstimationErrorConfig {
    fn default() -> Self {
        EstimationErrorConfig {
            seed: 0,
            trials: 100,
            dim: 10,
            sample_sizes: (20..=100).step_by(10).collect(),
        }
    }
}

impl EstimationErrorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.into(),
            })
        };
        if self.trials == 0 {
            return bad("trials", "must be at least 1");
        }
        if self.dim == 0 {
            return bad("dim", "must be at least 1");
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.iter().any(|&n| n < 2) {
            return bad("sample_sizes", "need sizes of at least 2");
        }
        Ok(())
    }
}

/// Averages over the trials that produced a nonsingular sample covariance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimationErrorRow {
    pub samples: usize,
    pub trials_used: usize,
    pub skipped: usize,
    pub fr_mean: f64,
    pub fr_cov: f64,
    pub kl_mean: f64,
    pub kl_cov: f64,
}

struct TrialErrors {
    fr_mean: f64,
    fr_cov: f64,
    kl_mean: f64,
    kl_cov: f64,
}

fn one_trial(cfg: &EstimationErrorConfig, samples: usize, trial: usize) -> Result<TrialErrors> {
    let n = cfg.dim;
    let mut rng = stream(
        cfg.seed,
        StreamTag::EstimationError,
        ((samples as u64) << 32) | trial as u64,
    );
    let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    let truth = SpdMatrix::new(&a * a.transpose())?;
    let z = DMatrix::<f64>::from_fn(n, samples, |_, _| rng.sample(StandardNormal));
    let x = &a * z;
    let mean: DVector<f64> = x.column_mean();
    let centered = &x - &mean * DVector::from_element(samples, 1.0).transpose();
    let cov = SpdMatrix::new(&centered * centered.transpose() / (samples as f64 - 1.0))?;
    let zero = DVector::zeros(n);
    Ok(TrialErrors {
        fr_mean: fr_mean_distance(&mean, &zero, &truth)?,
        fr_cov: fr_distance(&cov, &truth)?,
        kl_mean: kl_mean_divergence(&mean, &zero, &truth)?,
        kl_cov: kl_divergence(&cov, &truth)?,
    })
}

/// One row per sample size. Trials whose sample covariance is not positive
/// definite are skipped and counted.
pub fn run_estimation_error_study(cfg: &EstimationErrorConfig) -> Result<Vec<EstimationErrorRow>> {
    cfg.validate()?;
    let rows = cfg
        .sample_sizes
        .par_iter()
        .map(|&samples| {
            let results: Vec<Result<TrialErrors>> = (0..cfg.trials)
                .into_par_iter()
                .map(|t| one_trial(cfg, samples, t))
                .collect();
            let mut row = EstimationErrorRow {
                samples,
                trials_used: 0,
                skipped: 0,
                fr_mean: 0.0,
                fr_cov: 0.0,
                kl_mean: 0.0,
                kl_cov: 0.0,
            };
            for r in results {
                match r {
                    Ok(e) => {
                        row.trials_used += 1;
                        row.fr_mean += e.fr_mean;
                        row.fr_cov += e.fr_cov;
                        row.kl_mean += e.kl_mean;
                        row.kl_cov += e.kl_cov;
                    }
                    Err(e) => {
                        log::debug!("N={samples}: trial skipped: {e}");
                        row.skipped += 1;
                    }
                }
            }
            let used = row.trials_used.max(1) as f64;
            row.fr_mean /= used;
            row.fr_cov /= used;
            row.kl_mean /= used;
            row.kl_cov /= used;
            if row.trials_used == 0 {
                row.fr_mean = f64::NAN;
                row.fr_cov = f64::NAN;
                row.kl_mean = f64::NAN;
                row.kl_cov = f64::NAN;
            }
            row
        })
        .collect();
    Ok(rows)
}
