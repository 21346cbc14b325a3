//! Optimistic likelihood over a KL ball around a zero-mean nominal Gaussian:
//!
//! ```text
//! minimize  Tr(S Σ⁻¹) + log det Σ   subject to  Tr(Σ⁻¹Σ̂) + log det(Σ Σ̂⁻¹) − n ≤ 2ρ
//! ```
//!
//! The problem has a one-dimensional convex dual in the multiplier `γ`; its
//! minimizer gives `Σ* = (S + γ*Σ̂)/(1 + γ*)`.
//!
//! Both dual forms (full scatter and `S = ΛΛᵀ` with `Λ` of width `k < n`) are
//! evaluated on the eigenvalues `c_i` of the whitened scatter `Σ̂^{-1/2} S Σ̂^{-1/2}`.
//! With `u_i = (1 − c_i)/(γ + c_i)` they read
//!
//! ```text
//! g(γ)   = 2ργ + (1+γ) Σ log(1 + u_i)            (+ constant)
//! g'(γ)  = 2ρ + Σ [log(1 + u_i) − u_i]
//! g''(γ) = Σ u_i² / (1 + γ)
//! ```
//!
//! which are algebraically the same as the textbook expressions but avoid
//! cancellation between large logarithms.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::root::{bracket, safeguarded_newton};
use crate::spd::{symmetrize, SpdMatrix, SymMatrix};

const BRACKET_STEPS: usize = 200;
const NEWTON_MAX_ITER: usize = 500;
const RESIDUAL_TOL: f64 = 1e-10;
const BRACKET_REL_WIDTH: f64 = 1e-14;
const PSD_TOL: f64 = 1e-10;

/// `KL(N(0, cov0) ‖ N(0, cov1)) = ½(Tr(cov1⁻¹ cov0) + log det(cov1 cov0⁻¹) − n)`.
pub fn kl_divergence(cov0: &SpdMatrix, cov1: &SpdMatrix) -> Result<f64> {
    if cov0.dim() != cov1.dim() {
        return Err(Error::DimensionMismatch {
            expected: cov0.dim(),
            found: cov1.dim(),
        });
    }
    let n = cov0.dim() as f64;
    let value =
        0.5 * (cov1.trace_inv_product(&cov0.to_sym()) + cov1.log_det() - cov0.log_det() - n);
    Ok(value.max(0.0))
}

/// How the scatter matrix is supplied.
#[derive(Clone, Debug)]
pub enum Scatter {
    Full(SymMatrix),
    /// `S = ΛΛᵀ` with `Λ` of size `n × k`, `k < n`.
    Factor(DMatrix<f64>),
}

#[derive(Clone, Debug)]
pub struct KlProblem {
    nominal: SpdMatrix,
    radius: f64,
    scatter: Scatter,
}

fn check_radius(radius: f64) -> Result<()> {
    if radius == 0.0 {
        return Err(Error::DegenerateBall);
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidParameter {
            name: "radius",
            reason: format!("{radius} is not a positive number"),
        });
    }
    Ok(())
}

impl KlProblem {
    pub fn full(nominal: SpdMatrix, radius: f64, scatter: SymMatrix) -> Result<Self> {
        check_radius(radius)?;
        if scatter.dim() != nominal.dim() {
            return Err(Error::DimensionMismatch {
                expected: nominal.dim(),
                found: scatter.dim(),
            });
        }
        let eig = scatter.eig()?;
        let (lo, hi) = (eig.values[0], eig.values[eig.values.len() - 1]);
        if lo < -PSD_TOL * hi.max(1.0) {
            return Err(Error::NotPositiveSemidefinite { eigenvalue: lo });
        }
        Ok(KlProblem {
            nominal,
            radius,
            scatter: Scatter::Full(scatter),
        })
    }

    pub fn low_rank(nominal: SpdMatrix, radius: f64, factor: DMatrix<f64>) -> Result<Self> {
        check_radius(radius)?;
        if factor.nrows() != nominal.dim() {
            return Err(Error::DimensionMismatch {
                expected: nominal.dim(),
                found: factor.nrows(),
            });
        }
        if factor.ncols() == 0 || factor.ncols() >= factor.nrows() {
            return Err(Error::InvalidParameter {
                name: "factor",
                reason: format!(
                    "needs between 1 and {} columns, has {}",
                    factor.nrows() - 1,
                    factor.ncols()
                ),
            });
        }
        if factor.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "factor",
                reason: "contains non-finite entries".into(),
            });
        }
        Ok(KlProblem {
            nominal,
            radius,
            scatter: Scatter::Factor(factor),
        })
    }

    /// Scatter of `observations` about `mean`; uses the factored form when
    /// there are fewer observations than dimensions.
    pub fn from_observations(
        observations: &[DVector<f64>],
        mean: &DVector<f64>,
        nominal: SpdMatrix,
        radius: f64,
    ) -> Result<Self> {
        let n = nominal.dim();
        if mean.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: mean.len(),
            });
        }
        let m = observations.len();
        if m == 0 {
            return Err(Error::EmptyObservations);
        }
        if m < n {
            let scale = (m as f64).sqrt();
            let mut factor = DMatrix::zeros(n, m);
            for (j, x) in observations.iter().enumerate() {
                if x.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: x.len(),
                    });
                }
                factor.set_column(j, &((x - mean) / scale));
            }
            Self::low_rank(nominal, radius, factor)
        } else {
            Self::full(nominal, radius, SymMatrix::scatter(observations, mean)?)
        }
    }

    pub fn nominal(&self) -> &SpdMatrix {
        &self.nominal
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn scatter(&self) -> &Scatter {
        &self.scatter
    }

    pub fn dim(&self) -> usize {
        self.nominal.dim()
    }

    /// The scatter as a dense `n × n` matrix.
    pub fn scatter_matrix(&self) -> SymMatrix {
        match &self.scatter {
            Scatter::Full(s) => s.clone(),
            Scatter::Factor(f) => SymMatrix::from_raw(f * f.transpose()),
        }
    }
}

/// Dual objective and its first two derivatives at one `γ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualDerivatives {
    pub value: f64,
    pub first: f64,
    pub second: f64,
}

/// Whitened scatter spectrum; `null_dim` eigenvalues are exactly zero.
struct DualSpectrum {
    n: usize,
    rho: f64,
    values: Vec<f64>,
    null_dim: usize,
    /// Added to the spectral `g` to obtain the documented dual function.
    offset: f64,
}

impl DualSpectrum {
    fn new(p: &KlProblem) -> Result<Self> {
        let n = p.dim();
        let nominal_inv_sqrt = p.nominal.inv_sqrt();
        match &p.scatter {
            Scatter::Full(s) => {
                let w = nominal_inv_sqrt.as_matrix() * s.as_matrix() * nominal_inv_sqrt.as_matrix();
                let eig = SymMatrix::from_raw(w).eig()?;
                Ok(DualSpectrum {
                    n,
                    rho: p.radius,
                    values: eig.values.iter().map(|c| c.max(0.0)).collect(),
                    null_dim: 0,
                    offset: -p.nominal.log_det(),
                })
            }
            Scatter::Factor(f) => {
                // ΛᵀΣ̂⁻¹Λ = (Σ̂^{-1/2}Λ)ᵀ(Σ̂^{-1/2}Λ), a k × k Gram matrix.
                let white = nominal_inv_sqrt.as_matrix() * f;
                let gram = symmetrize(&white.tr_mul(&white));
                let eig = SymMatrix::from_raw(gram).eig()?;
                Ok(DualSpectrum {
                    n,
                    rho: p.radius,
                    values: eig.values.iter().map(|c| c.max(0.0)).collect(),
                    null_dim: n - f.ncols(),
                    offset: 0.0,
                })
            }
        }
    }

    fn is_full_rank(&self) -> bool {
        self.null_dim == 0 && self.values.iter().all(|&c| c > 0.0)
    }

    /// Iterates `u_i` over all `n` whitened eigenvalues.
    fn ratios(&self, gamma: f64) -> impl Iterator<Item = f64> + '_ {
        let null = if gamma > 0.0 {
            1.0 / gamma
        } else {
            f64::INFINITY
        };
        self.values
            .iter()
            .map(move |&c| (1.0 - c) / (gamma + c))
            .chain(std::iter::repeat_n(null, self.null_dim))
    }

    /// `g` without the constant offset.
    fn value(&self, gamma: f64) -> f64 {
        2.0 * self.rho * gamma + (1.0 + gamma) * self.ratios(gamma).map(f64::ln_1p).sum::<f64>()
    }

    fn first(&self, gamma: f64) -> f64 {
        2.0 * self.rho + self.ratios(gamma).map(|u| u.ln_1p() - u).sum::<f64>()
    }

    fn second(&self, gamma: f64) -> f64 {
        self.ratios(gamma).map(|u| u * u).sum::<f64>() / (1.0 + gamma)
    }

    fn derivatives(&self, gamma: f64) -> DualDerivatives {
        DualDerivatives {
            value: self.value(gamma) + self.offset,
            first: self.first(gamma),
            second: self.second(gamma),
        }
    }

    /// Strong-duality value `n − g(γ)` of the primal problem.
    fn primal_value(&self, gamma: f64, nominal_log_det: f64) -> f64 {
        self.n as f64 - self.value(gamma) + nominal_log_det
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: format!("{gamma} is not a positive number"),
        });
    }
    Ok(())
}

/// `g1(γ) = γ(2ρ + log det Σ̂) + n(1+γ)log(1+γ) − (1+γ)log det(S + γΣ̂)` and derivatives.
pub fn dual_derivatives_full(p: &KlProblem, gamma: f64) -> Result<DualDerivatives> {
    check_gamma(gamma)?;
    if !matches!(p.scatter, Scatter::Full(_)) {
        return Err(Error::InvalidParameter {
            name: "scatter",
            reason: "full dual requires a full scatter matrix".into(),
        });
    }
    Ok(DualSpectrum::new(p)?.derivatives(gamma))
}

/// `g2(γ) = 2γρ + n(1+γ)log(1+γ) − (n−k)(1+γ)log γ − (1+γ)log det(γI_k + ΛᵀΣ̂⁻¹Λ)`
/// and derivatives. Only `k × k` matrices are decomposed.
pub fn dual_derivatives_lowrank(p: &KlProblem, gamma: f64) -> Result<DualDerivatives> {
    check_gamma(gamma)?;
    if !matches!(p.scatter, Scatter::Factor(_)) {
        return Err(Error::InvalidParameter {
            name: "scatter",
            reason: "low-rank dual requires a factor".into(),
        });
    }
    Ok(DualSpectrum::new(p)?.derivatives(gamma))
}

#[derive(Clone, Debug)]
pub struct KlSolution {
    /// Optimal multiplier; zero when the scatter itself lies in the ball.
    pub gamma_star: f64,
    /// Minimum of `Tr(S Σ⁻¹) + log det Σ` over the ball, evaluated at the optimizer.
    pub optimal_value: f64,
    /// Same minimum obtained from the dual function.
    pub dual_value: f64,
    pub optimizer: SpdMatrix,
    /// `|g'(γ*)|`.
    pub kkt_residual: f64,
    /// `2ρ − 2 KL(Σ̂ ‖ Σ*)`.
    pub constraint_slack: f64,
    pub newton_iterations: usize,
}

/// Solves the KL-ball problem through its dual.
pub fn solve_kl(p: &KlProblem) -> Result<KlSolution> {
    let spectrum = DualSpectrum::new(p)?;
    let scatter = p.scatter_matrix();
    let nominal_log_det = p.nominal.log_det();

    let full_rank = spectrum.is_full_rank();
    let (gamma, residual, iterations) = if full_rank && spectrum.first(0.0) >= 0.0 {
        (0.0, 0.0, 0)
    } else {
        let (lo, hi) = bracket(|g| spectrum.first(g), 1.0, BRACKET_STEPS)?;
        if lo == 0.0 && !full_rank {
            return Err(Error::BracketFailure {
                steps: BRACKET_STEPS,
            });
        }
        if lo == 0.0 {
            (0.0, 0.0, 0)
        } else {
            // For small radii g' itself is O(ρ), so the tolerance shrinks with it.
            let tol = RESIDUAL_TOL * (2.0 * p.radius).min(1.0);
            let root = safeguarded_newton(
                |g| (spectrum.first(g), spectrum.second(g)),
                lo,
                hi,
                tol,
                BRACKET_REL_WIDTH,
                NEWTON_MAX_ITER,
            );
            (root.x, root.residual, root.iterations)
        }
    };

    let combined = &scatter + &(&p.nominal.to_sym() * gamma);
    let optimizer = SpdMatrix::from_raw(combined.into_matrix() / (1.0 + gamma))?;
    let optimal_value = optimizer.trace_inv_product(&scatter) + optimizer.log_det();
    let constraint_slack = 2.0 * p.radius - 2.0 * kl_divergence(&p.nominal, &optimizer)?;
    Ok(KlSolution {
        gamma_star: gamma,
        optimal_value,
        dual_value: spectrum.primal_value(gamma, nominal_log_det),
        optimizer,
        kkt_residual: residual,
        constraint_slack,
        newton_iterations: iterations,
    })
}

/// Optimistic log-likelihood over the KL ball of radius `rho` around
/// `N(mean, nominal_cov)`, together with the optimal covariance.
///
/// `rho = 0` returns the nominal log-likelihood.
pub fn optimistic_loglik_kl(
    observations: &[DVector<f64>],
    mean: &DVector<f64>,
    nominal_cov: &SpdMatrix,
    rho: f64,
) -> Result<(f64, SpdMatrix)> {
    if rho == 0.0 {
        let s = SymMatrix::scatter(observations, mean)?;
        if s.dim() != nominal_cov.dim() {
            return Err(Error::DimensionMismatch {
                expected: nominal_cov.dim(),
                found: s.dim(),
            });
        }
        let value = nominal_cov.trace_inv_product(&s) + nominal_cov.log_det();
        return Ok((-value, nominal_cov.clone()));
    }
    let p = KlProblem::from_observations(observations, mean, nominal_cov.clone(), rho)?;
    let sol = solve_kl(&p)?;
    Ok((-sol.optimal_value, sol.optimizer))
}
