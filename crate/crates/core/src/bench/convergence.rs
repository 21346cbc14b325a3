//! Convergence study of the Fisher-Rao solver on synthetic instances.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fr::FrBall;
use crate::fr_solver::{solve, FrProblem, FrSolverOptions, StepMode};
use crate::rng::{stream, StreamTag};
use crate::spd::{SpdMatrix, SymMatrix};

/// How the scatter matrix is generated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ScatterMode {
    /// One observation: rank-one scatter.
    Singular,
    /// Many observations plus a small ridge.
    PositiveDefinite,
}

impl ScatterMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ScatterMode::Singular => "singular",
            ScatterMode::PositiveDefinite => "positive_definite",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceConfig {
    pub seed: u64,
    pub trials: usize,
    pub dims: Vec<usize>,
    pub modes: Vec<ScatterMode>,
    /// Iterates per run; every run goes the full length so the trace is complete.
    pub max_iterations: usize,
    pub step_mode: StepMode,
    /// Relative improvement defining "converged" in the summary rows.
    pub stop_tolerance: f64,
    /// Improvements at or below this are treated as round-off and end the tail.
    pub trace_floor: f64,
    /// Observations in positive-definite mode.
    pub pd_samples: usize,
    /// Ridge added to the scatter in positive-definite mode.
    pub pd_ridge: f64,
    /// Radius is `radius_scale · √n`.
    pub radius_scale: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            seed: 0,
            trials: 10,
            dims: vec![10, 30],
            modes: vec![ScatterMode::Singular, ScatterMode::PositiveDefinite],
            max_iterations: 1000,
            step_mode: StepMode::GuaranteedConstant,
            stop_tolerance: 1e-4,
            trace_floor: 1e-13,
            pd_samples: 100,
            pd_ridge: 1e-6,
            radius_scale: 0.01,
        }
    }
}

impl ConvergenceConfig {
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
        if self.dims.is_empty() || self.dims.contains(&0) {
            return bad("dims", "need at least one positive dimension");
        }
        if self.modes.is_empty() {
            return bad("modes", "need at least one mode");
        }
        if self.max_iterations < 2 {
            return bad("max_iterations", "need at least 2 iterates");
        }
        if self.pd_samples == 0 {
            return bad("pd_samples", "must be at least 1");
        }
        if !(self.radius_scale > 0.0) || !self.radius_scale.is_finite() {
            return bad("radius_scale", "must be a positive number");
        }
        Ok(())
    }
}

/// Summary of one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub mode: &'static str,
    pub n: usize,
    pub trial: usize,
    pub status: String,
    pub iterations: usize,
    /// First step whose relative improvement fell below the stop tolerance.
    pub iterations_to_tolerance: Option<usize>,
    pub wall_time_ms: f64,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Least-squares slope of log improvement against log iteration on the tail.
    pub tail_slope: Option<f64>,
    /// Median ratio of successive improvements on the tail.
    pub tail_ratio: Option<f64>,
}

/// Per-iteration record of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTrace {
    pub mode: ScatterMode,
    pub n: usize,
    pub trial: usize,
    /// `L(Σ_k)`, starting with `L(Σ̂)`.
    pub objective: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub objective: f64,
    pub relative_improvement: Option<f64>,
}

impl ConvergenceTrace {
    /// `|L_k − L_{k−1}| / |L_k|` for `k ≥ 1`; entry `k − 1` belongs to step `k`.
    pub fn improvements(&self) -> Vec<f64> {
        relative_improvements(&self.objective)
    }

    pub fn file_name(&self) -> String {
        format!(
            "trace_{}_n{}_t{}.csv",
            self.mode.as_str(),
            self.n,
            self.trial
        )
    }

    pub fn points(&self) -> Vec<TracePoint> {
        let imp = self.improvements();
        self.objective
            .iter()
            .enumerate()
            .map(|(k, &objective)| TracePoint {
                iteration: k,
                objective,
                relative_improvement: k.checked_sub(1).map(|i| imp[i]),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub traces: Vec<ConvergenceTrace>,
}

pub fn relative_improvements(objective: &[f64]) -> Vec<f64> {
    objective
        .windows(2)
        .map(|w| ((w[1] - w[0]) / w[1]).abs())
        .collect()
}

/// Decay summary of an improvement sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailRate {
    pub slope: f64,
    pub median_ratio: f64,
    pub points: usize,
}

const MIN_TAIL_POINTS: usize = 4;

/// Fits the second half of the improvements that stay above `floor`.
///
/// The sequence is cut at the first improvement at or below `floor`; beyond
/// that point the objective has stalled at round-off level.
pub fn tail_rate(improvements: &[f64], floor: f64) -> Option<TailRate> {
    let usable = improvements
        .iter()
        .position(|&d| !(d > floor) || !d.is_finite())
        .unwrap_or(improvements.len());
    let start = usable / 2;
    let tail: Vec<(f64, f64)> = (start..usable)
        .map(|i| (((i + 1) as f64).ln(), improvements[i].ln()))
        .collect();
    if tail.len() < MIN_TAIL_POINTS {
        return None;
    }
    let m = tail.len() as f64;
    let (sx, sy) = tail.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / m, sy / m);
    let (sxy, sxx) = tail.iter().fold((0.0, 0.0), |a, p| {
        (a.0 + (p.0 - mx) * (p.1 - my), a.1 + (p.0 - mx).powi(2))
    });
    let mut ratios: Vec<f64> = improvements[start..usable]
        .windows(2)
        .map(|w| w[1] / w[0])
        .collect();
    ratios.sort_by(f64::total_cmp);
    let mid = ratios.len() / 2;
    let median_ratio = if ratios.len() % 2 == 1 {
        ratios[mid]
    } else {
        0.5 * (ratios[mid - 1] + ratios[mid])
    };
    Some(TailRate {
        slope: sxy / sxx,
        median_ratio,
        points: tail.len(),
    })
}

/// Random `Σ̂`: eigenvectors of `B + Bᵀ` for Gaussian `B`, eigenvalues uniform on `[1, 10]`.
pub fn random_nominal(rng: &mut impl Rng, n: usize) -> Result<SpdMatrix> {
    let b = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    let eig = SymMatrix::new(&b + b.transpose())?.eig()?;
    let spread = Uniform::new_inclusive(1.0, 10.0).expect("valid range");
    let values = DVector::from_fn(n, |_, _| rng.sample(spread));
    let q = &eig.vectors;
    SpdMatrix::from_raw(q * DMatrix::from_diagonal(&values) * q.transpose())
}

/// One synthetic problem instance; trial `k` depends only on `(seed, mode, n, k)`.
pub fn instance(
    cfg: &ConvergenceConfig,
    mode: ScatterMode,
    n: usize,
    trial: usize,
) -> Result<FrProblem> {
    let index = ((mode as u64) << 40) | ((n as u64) << 20) | trial as u64;
    let mut rng = stream(cfg.seed, StreamTag::Convergence, index);
    let nominal = random_nominal(&mut rng, n)?;
    let samples = match mode {
        ScatterMode::Singular => 1,
        ScatterMode::PositiveDefinite => cfg.pd_samples,
    };
    let observations: Vec<DVector<f64>> = (0..samples)
        .map(|_| DVector::from_fn(n, |_, _| rng.sample(StandardNormal)))
        .collect();
    let mut scatter = SymMatrix::scatter(&observations, &DVector::zeros(n))?;
    if mode == ScatterMode::PositiveDefinite {
        scatter = scatter.shifted(cfg.pd_ridge);
    }
    let radius = cfg.radius_scale * (n as f64).sqrt();
    FrProblem::new(FrBall::new(nominal, radius)?, scatter)
}

fn run_one(
    cfg: &ConvergenceConfig,
    mode: ScatterMode,
    n: usize,
    trial: usize,
) -> (ConvergenceRow, ConvergenceTrace) {
    let mut row = ConvergenceRow {
        mode: mode.as_str(),
        n,
        trial,
        status: "ok".into(),
        iterations: 0,
        iterations_to_tolerance: None,
        wall_time_ms: 0.0,
        initial_objective: f64::NAN,
        final_objective: f64::NAN,
        tail_slope: None,
        tail_ratio: None,
    };
    let mut trace = ConvergenceTrace {
        mode,
        n,
        trial,
        objective: vec![],
    };
    let opts = FrSolverOptions {
        max_iterations: cfg.max_iterations,
        step_mode: cfg.step_mode,
        relative_improvement_tol: 0.0,
        ..FrSolverOptions::default()
    };
    let outcome = instance(cfg, mode, n, trial).and_then(|p| {
        let started = Instant::now();
        let report = solve(&p, &opts)?;
        Ok((report, started.elapsed()))
    });
    match outcome {
        Ok((report, elapsed)) => {
            let improvements = relative_improvements(&report.objective_trace);
            row.iterations = report.iterations_used;
            row.iterations_to_tolerance = improvements
                .iter()
                .position(|&d| d < cfg.stop_tolerance)
                .map(|i| i + 1);
            row.wall_time_ms = elapsed.as_secs_f64() * 1e3;
            row.initial_objective = report.objective_trace[0];
            row.final_objective = report.optimum_objective;
            if let Some(rate) = tail_rate(&improvements, cfg.trace_floor) {
                row.tail_slope = Some(rate.slope);
                row.tail_ratio = Some(rate.median_ratio);
            }
            trace.objective = report.objective_trace;
        }
        Err(e) => {
            log::warn!(
                "convergence run {} n={n} trial={trial} failed: {e}",
                mode.as_str()
            );
            row.status = format!("error: {e}");
        }
    }
    (row, trace)
}

/// Runs every `(mode, n, trial)` cell. Failed runs are reported in their row
/// and do not stop the study.
pub fn run_convergence_study(cfg: &ConvergenceConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let cells: Vec<(ScatterMode, usize, usize)> = cfg
        .modes
        .iter()
        .flat_map(|&m| {
            cfg.dims
                .iter()
                .flat_map(move |&n| (0..cfg.trials).map(move |t| (m, n, t)))
        })
        .collect();
    let (rows, traces) = cells
        .par_iter()
        .map(|&(m, n, t)| run_one(cfg, m, n, t))
        .collect::<Vec<_>>()
        .into_iter()
        .unzip();
    Ok(ConvergenceReport { rows, traces })
}
