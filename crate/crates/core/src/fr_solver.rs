//! Optimistic likelihood over a Fisher-Rao ball:
//!
//! ```text
//! minimize  L(Σ) = Tr(S Σ⁻¹) + log det Σ   subject to  d(Σ, Σ̂) ≤ ρ
//! ```
//!
//! solved by projected geodesic gradient descent with geodesic averaging.

use std::f64::consts::SQRT_2;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fr::{exp_in_frame, fr_distance, geodesic, metric_inner, FrBall, Frame};
use crate::spd::{SpdMatrix, SymMatrix, DEFAULT_EIGEN_FLOOR};

/// Lower bound on scatter eigenvalues, scaled by `max(1, λ_max(S))`.
const PSD_TOL: f64 = 1e-10;
/// Slack on the eigenvalue envelope check, relative to the envelope.
const ENVELOPE_TOL: f64 = 1e-8;
const ARMIJO_DECREASE: f64 = 1e-4;
const ARMIJO_MAX_HALVINGS: usize = 60;

/// Step-size rule for [`solve`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// Constant step from [`step_guarantee`]; depends on `max_iterations`.
    GuaranteedConstant,
    /// Constant user-supplied step.
    Fixed(f64),
    /// Backtracking by halving, restarted every iteration from
    /// `min(1/β, 4ρ/‖G‖)` with sufficient-decrease constant `1e-4`.
    ArmijoBacktracking,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrSolverOptions {
    /// Number of iterates `K`, counting the starting point.
    pub max_iterations: usize,
    pub step_mode: StepMode,
    /// Stop once `|L_{k+1} − L_k| / |L_{k+1}|` drops below this. Zero disables the test.
    pub relative_improvement_tol: f64,
    /// Added to the scatter diagonal before solving.
    pub jitter: f64,
    /// Record `L(Σ̄_k)` at every iteration.
    pub track_averaged_objective: bool,
}

impl Default for FrSolverOptions {
    fn default() -> Self {
        FrSolverOptions {
            max_iterations: 1000,
            step_mode: StepMode::GuaranteedConstant,
            relative_improvement_tol: 1e-4,
            jitter: 0.0,
            track_averaged_objective: false,
        }
    }
}

impl FrSolverOptions {
    /// Settings used by the flexible discriminant rules.
    pub fn for_classification() -> Self {
        FrSolverOptions {
            max_iterations: 500,
            step_mode: StepMode::ArmijoBacktracking,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter {
                name: "max_iterations",
                reason: "must be at least 1".into(),
            });
        }
        if !(self.relative_improvement_tol >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "relative_improvement_tol",
                reason: format!("{} is negative", self.relative_improvement_tol),
            });
        }
        if !(self.jitter >= 0.0) || !self.jitter.is_finite() {
            return Err(Error::InvalidParameter {
                name: "jitter",
                reason: format!("{} is not a finite nonnegative number", self.jitter),
            });
        }
        if let StepMode::Fixed(alpha) = self.step_mode {
            if !(alpha > 0.0) || !alpha.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "step",
                    reason: format!("{alpha} is not a positive number"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Tolerance,
    MaxIterations,
    /// `ρ = 0`: the ball is a single point and no iteration ran.
    ZeroRadius,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    /// Averaged iterate `Σ̄_K`.
    pub optimum: SpdMatrix,
    /// `L(Σ̄_K)`.
    pub optimum_objective: f64,
    /// Lowest-objective point among raw and averaged iterates.
    pub best_iterate: SpdMatrix,
    pub best_objective: f64,
    /// `L(Σ_k)` for every iterate, starting with `L(Σ̂)`.
    pub objective_trace: Vec<f64>,
    /// `L(Σ̄_k)` when tracking was requested.
    pub averaged_trace: Option<Vec<f64>>,
    /// Number of descent steps taken.
    pub iterations_used: usize,
    pub termination: Termination,
    /// `max(0, d(Σ̂, Σ̄_K) − ρ)`.
    pub final_ball_residual: f64,
    /// Suboptimality guarantee for the constant step; `None` when `ρ = 0`.
    pub suboptimality_bound: Option<f64>,
}

/// Scatter matrix and Fisher-Rao ball defining one problem instance.
#[derive(Clone, Debug)]
pub struct FrProblem {
    ball: FrBall,
    scatter: SymMatrix,
    scatter_min: f64,
    scatter_max: f64,
}

impl FrProblem {
    pub fn new(ball: FrBall, scatter: SymMatrix) -> Result<Self> {
        if ball.dim() != scatter.dim() {
            return Err(Error::DimensionMismatch {
                expected: ball.dim(),
                found: scatter.dim(),
            });
        }
        let eig = scatter.eig()?;
        let scatter_min = eig.values[0];
        let scatter_max = eig.values[eig.values.len() - 1];
        if scatter_min < -PSD_TOL * scatter_max.max(1.0) {
            return Err(Error::NotPositiveSemidefinite {
                eigenvalue: scatter_min,
            });
        }
        Ok(FrProblem {
            ball,
            scatter,
            scatter_min: scatter_min.max(0.0),
            scatter_max: scatter_max.max(0.0),
        })
    }

    /// Scatter of `observations` about `mean` with a ball of radius `radius` around `nominal`.
    pub fn from_observations(
        observations: &[DVector<f64>],
        mean: &DVector<f64>,
        nominal: SpdMatrix,
        radius: f64,
    ) -> Result<Self> {
        if mean.len() != nominal.dim() {
            return Err(Error::DimensionMismatch {
                expected: nominal.dim(),
                found: mean.len(),
            });
        }
        let scatter = SymMatrix::scatter(observations, mean)?;
        Self::new(FrBall::new(nominal, radius)?, scatter)
    }

    pub fn ball(&self) -> &FrBall {
        &self.ball
    }

    pub fn scatter(&self) -> &SymMatrix {
        &self.scatter
    }

    pub fn dim(&self) -> usize {
        self.ball.dim()
    }

    /// Same problem with `shift` added to the scatter diagonal.
    pub fn with_jitter(&self, shift: f64) -> Self {
        FrProblem {
            ball: self.ball.clone(),
            scatter: self.scatter.shifted(shift),
            scatter_min: self.scatter_min + shift,
            scatter_max: self.scatter_max + shift,
        }
    }

    /// Eigenvalue envelope `[λ_min(Σ̂) e^{−√2ρ}, λ_max(Σ̂) e^{√2ρ}]` of the ball.
    pub fn eigenvalue_envelope(&self) -> (f64, f64) {
        let c = self.ball.center();
        let spread = (SQRT_2 * self.ball.radius()).exp();
        (c.min_eigenvalue() / spread, c.max_eigenvalue() * spread)
    }
}

/// `L(Σ) = Tr(S Σ⁻¹) + log det Σ`.
pub fn objective(p: &FrProblem, sigma: &SpdMatrix) -> Result<f64> {
    if sigma.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: sigma.dim(),
        });
    }
    Ok(sigma.trace_inv_product(&p.scatter) + sigma.log_det())
}

/// Riemannian gradient `2(Σ − S)` of `L` under the Fisher-Rao metric.
pub fn riemannian_gradient(p: &FrProblem, sigma: &SpdMatrix) -> SymMatrix {
    &(&sigma.to_sym() - &p.scatter) * 2.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepGuarantee {
    /// Gradient-norm bound `Γ` over the ball.
    pub gradient_bound: f64,
    /// Constant step size `α`.
    pub step: f64,
    /// Guarantee on `L(Σ̄_K) − L*`.
    pub bound: f64,
}

/// Constant step and suboptimality bound for `K` iterates.
pub fn step_guarantee(p: &FrProblem, k: usize) -> Result<StepGuarantee> {
    let rho = p.ball.radius();
    if rho == 0.0 {
        return Err(Error::DegenerateBall);
    }
    if k == 0 {
        return Err(Error::InvalidParameter {
            name: "K",
            reason: "must be at least 1".into(),
        });
    }
    let n = p.dim() as f64;
    let lam_min = p.ball.center().min_eigenvalue();
    let spread = (SQRT_2 * rho).exp();
    let gradient_bound = n.sqrt() / SQRT_2 * spread * spread / (lam_min * lam_min)
        * (1.0 - spread * p.scatter_max / lam_min).abs().max(1.0);
    let th = (2.0 * SQRT_2 * rho).tanh();
    let kf = k as f64;
    let step = 2f64.powf(0.25) * (rho * th).sqrt() / (gradient_bound * kf.sqrt());
    let bound = 2f64.powf(1.75) * rho.powf(1.5) * gradient_bound / (kf * th).sqrt();
    Ok(StepGuarantee {
        gradient_bound,
        step,
        bound,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothnessConstants {
    /// Geodesic smoothness constant `β` on the ball.
    pub beta: f64,
    /// Geodesic strong-convexity constant, present only for `S ≻ 0`.
    pub strong_convexity: Option<f64>,
}

pub fn smoothness_constants(p: &FrProblem) -> SmoothnessConstants {
    let (env_lo, env_hi) = p.eigenvalue_envelope();
    let beta = 2.0 * p.scatter_max / env_lo;
    let strong_convexity =
        (p.scatter_min > DEFAULT_EIGEN_FLOOR).then(|| 2.0 * p.scatter_min / env_hi);
    SmoothnessConstants {
        beta,
        strong_convexity,
    }
}

fn breakdown(iteration: usize, err: Error, last: &SpdMatrix) -> Error {
    Error::Breakdown {
        iteration,
        reason: err.to_string(),
        last_feasible: Box::new(last.clone()),
    }
}

fn check_envelope(sigma: &SpdMatrix, lo: f64, hi: f64) -> std::result::Result<(), Error> {
    let (smin, smax) = (sigma.min_eigenvalue(), sigma.max_eigenvalue());
    if smin < lo - ENVELOPE_TOL * lo.max(1.0) || smax > hi + ENVELOPE_TOL * hi.max(1.0) {
        return Err(Error::InvalidParameter {
            name: "iterate",
            reason: format!(
                "eigenvalues [{smin:e}, {smax:e}] escaped the ball envelope [{lo:e}, {hi:e}]"
            ),
        });
    }
    Ok(())
}

struct Stepper<'a> {
    p: &'a FrProblem,
    mode: StepMode,
    constant: Option<f64>,
    beta: f64,
}

impl Stepper<'_> {
    fn candidate(&self, sigma: &SpdMatrix, grad: &SymMatrix, alpha: f64) -> Result<SpdMatrix> {
        let half = exp_in_frame(&Frame::new(sigma), &(grad * -alpha))?;
        self.p.ball.project(&half)
    }

    /// Next iterate and its objective, or `None` if backtracking found no decrease.
    fn step(&self, sigma: &SpdMatrix, value: f64) -> Result<Option<(SpdMatrix, f64)>> {
        let grad = riemannian_gradient(self.p, sigma);
        let alpha = match self.mode {
            StepMode::GuaranteedConstant => self.constant.expect("constant step precomputed"),
            StepMode::Fixed(alpha) => alpha,
            StepMode::ArmijoBacktracking => return self.backtrack(sigma, value, &grad),
        };
        let next = self.candidate(sigma, &grad, alpha)?;
        let next_value = objective(self.p, &next)?;
        Ok(Some((next, next_value)))
    }

    fn backtrack(
        &self,
        sigma: &SpdMatrix,
        value: f64,
        grad: &SymMatrix,
    ) -> Result<Option<(SpdMatrix, f64)>> {
        let grad_norm = metric_inner(sigma, grad, grad)?.sqrt();
        if grad_norm == 0.0 {
            return Ok(None);
        }
        // 1/β can be infinite (S = 0); the second cap keeps the trial step inside
        // a few ball diameters.
        let mut alpha = (1.0 / self.beta).min(4.0 * self.p.ball.radius() / grad_norm);
        for _ in 0..ARMIJO_MAX_HALVINGS {
            let next = self.candidate(sigma, grad, alpha)?;
            let next_value = objective(self.p, &next)?;
            let moved = fr_distance(sigma, &next)?;
            if next_value <= value - ARMIJO_DECREASE / alpha * moved * moved && moved > 0.0 {
                return Ok(Some((next, next_value)));
            }
            alpha *= 0.5;
        }
        Ok(None)
    }
}

/// Projected geodesic gradient descent.
///
/// Starts at `Σ_1 = Σ̄_1 = Σ̂`, takes at most `K − 1` steps and reports the
/// averaged iterate `Σ̄` at termination as [`SolveReport::optimum`].
pub fn solve(p: &FrProblem, opts: &FrSolverOptions) -> Result<SolveReport> {
    opts.validate()?;
    let shifted;
    let p = if opts.jitter > 0.0 {
        shifted = p.with_jitter(opts.jitter);
        &shifted
    } else {
        p
    };
    let start = p.ball.center().clone();
    let start_value = objective(p, &start)?;

    if p.ball.radius() == 0.0 {
        return Ok(SolveReport {
            optimum: start.clone(),
            optimum_objective: start_value,
            best_iterate: start,
            best_objective: start_value,
            objective_trace: vec![start_value],
            averaged_trace: opts.track_averaged_objective.then(|| vec![start_value]),
            iterations_used: 0,
            termination: Termination::ZeroRadius,
            final_ball_residual: 0.0,
            suboptimality_bound: None,
        });
    }

    let constants = step_guarantee(p, opts.max_iterations)?;
    let stepper = Stepper {
        p,
        mode: opts.step_mode,
        constant: Some(constants.step),
        beta: smoothness_constants(p).beta,
    };
    let (env_lo, env_hi) = p.eigenvalue_envelope();

    let mut sigma = start.clone();
    let mut value = start_value;
    let mut averaged = start.clone();
    let mut trace = vec![start_value];
    let mut averaged_trace = opts.track_averaged_objective.then(|| vec![start_value]);
    let mut best = (start, start_value);
    let mut termination = Termination::MaxIterations;
    let mut steps = 0;

    for k in 1..opts.max_iterations {
        let Some((next, next_value)) = stepper
            .step(&sigma, value)
            .map_err(|e| breakdown(k, e, &sigma))?
        else {
            termination = Termination::Tolerance;
            break;
        };
        check_envelope(&next, env_lo, env_hi).map_err(|e| breakdown(k, e, &sigma))?;
        averaged = geodesic(&averaged, &next, 1.0 / (k as f64 + 1.0))
            .map_err(|e| breakdown(k, e, &sigma))?;
        steps = k;
        trace.push(next_value);
        if let Some(t) = averaged_trace.as_mut() {
            t.push(objective(p, &averaged)?);
        }
        if next_value < best.1 {
            best = (next.clone(), next_value);
        }
        let improvement = ((next_value - value) / next_value).abs();
        sigma = next;
        value = next_value;
        if opts.relative_improvement_tol > 0.0 && improvement < opts.relative_improvement_tol {
            termination = Termination::Tolerance;
            break;
        }
    }

    let optimum_objective = objective(p, &averaged)?;
    if optimum_objective < best.1 {
        best = (averaged.clone(), optimum_objective);
    }
    let final_ball_residual = (p.ball.distance_from_center(&averaged)? - p.ball.radius()).max(0.0);
    Ok(SolveReport {
        optimum: averaged,
        optimum_objective,
        best_iterate: best.0,
        best_objective: best.1,
        objective_trace: trace,
        averaged_trace,
        iterations_used: steps,
        termination,
        final_ball_residual,
        suboptimality_bound: Some(constants.bound),
    })
}

/// Optimistic log-likelihood `−min L(Σ)` of `observations` over the Fisher-Rao
/// ball of radius `rho` around `nominal_cov`, with the mean fixed at `mean`.
///
/// Returns the value together with the minimizing covariance. The better of
/// the averaged iterate and the best raw iterate is used.
pub fn optimistic_loglik_fr(
    observations: &[DVector<f64>],
    mean: &DVector<f64>,
    nominal_cov: &SpdMatrix,
    rho: f64,
    opts: &FrSolverOptions,
) -> Result<(f64, SpdMatrix)> {
    let p = FrProblem::from_observations(observations, mean, nominal_cov.clone(), rho)?;
    let report = solve(&p, opts)?;
    Ok((-report.best_objective, report.best_iterate))
}
