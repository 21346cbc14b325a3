//! Optimistic likelihood over a ball of means with the covariance held fixed.
//!
//! With `P = Σ̂⁻¹`, the Fisher-Rao distance between `N(μ₀, Σ̂)` and `N(μ₁, Σ̂)`
//! is the Mahalanobis norm `‖μ₀ − μ₁‖_P`, and the KL divergence is half its
//! square, so both balls are ellipsoids around `μ̂`. The problem
//!
//! ```text
//! minimize  M⁻¹ Σ (x_m − μ)ᵀ P (x_m − μ) + log det Σ̂   subject to  ‖μ − μ̂‖_P ≤ ρ
//! ```
//!
//! is solved through its scalar dual in the multiplier `γ`, with
//! `μ* = (x̄ + γ*μ̂)/(1 + γ*)`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::root::{bracket, safeguarded_newton};
use crate::spd::SpdMatrix;

const BRACKET_STEPS: usize = 200;
const RESIDUAL_TOL: f64 = 1e-12;

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Fisher-Rao distance `√((μ₀−μ₁)ᵀ Σ̂⁻¹ (μ₀−μ₁))` between Gaussians sharing `cov`.
pub fn fr_mean_distance(mu0: &DVector<f64>, mu1: &DVector<f64>, cov: &SpdMatrix) -> Result<f64> {
    check_dims(cov.dim(), mu0.len())?;
    check_dims(cov.dim(), mu1.len())?;
    Ok(cov.inv_quad_form(&(mu0 - mu1)).max(0.0).sqrt())
}

/// KL divergence `½(μ₀−μ₁)ᵀ Σ̂⁻¹ (μ₀−μ₁)` between Gaussians sharing `cov`.
pub fn kl_mean_divergence(mu0: &DVector<f64>, mu1: &DVector<f64>, cov: &SpdMatrix) -> Result<f64> {
    check_dims(cov.dim(), mu0.len())?;
    check_dims(cov.dim(), mu1.len())?;
    Ok(0.5 * cov.inv_quad_form(&(mu0 - mu1)).max(0.0))
}

/// Radius of a mean ball in either divergence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanRadius {
    /// Fisher-Rao (Mahalanobis) distance.
    Fr(f64),
    /// KL divergence in nats; equivalent to `Fr(√(2ρ))`.
    Kl(f64),
}

impl MeanRadius {
    /// The radius in distance units.
    pub fn distance(self) -> f64 {
        match self {
            MeanRadius::Fr(r) => r,
            MeanRadius::Kl(r) => (2.0 * r).sqrt(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MeanProblem {
    nominal_mean: DVector<f64>,
    fixed_cov: SpdMatrix,
    radius: f64,
    sample_mean: DVector<f64>,
    sample_count: usize,
    /// `M⁻¹ Σ x_mᵀ P x_m`
    mean_sample_quad: f64,
}

impl MeanProblem {
    pub fn new(
        observations: &[DVector<f64>],
        nominal_mean: DVector<f64>,
        fixed_cov: SpdMatrix,
        radius: MeanRadius,
    ) -> Result<Self> {
        let radius = radius.distance();
        if radius == 0.0 {
            return Err(Error::DegenerateBall);
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParameter {
                name: "radius",
                reason: format!("{radius} is not a positive number"),
            });
        }
        let n = fixed_cov.dim();
        check_dims(n, nominal_mean.len())?;
        if observations.is_empty() {
            return Err(Error::EmptyObservations);
        }
        let mut sum = DVector::zeros(n);
        let mut quad = 0.0;
        for x in observations {
            check_dims(n, x.len())?;
            sum += x;
            quad += fixed_cov.inv_quad_form(x);
        }
        let m = observations.len();
        Ok(MeanProblem {
            nominal_mean,
            fixed_cov,
            radius,
            sample_mean: sum / m as f64,
            sample_count: m,
            mean_sample_quad: quad / m as f64,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn sample_mean(&self) -> &DVector<f64> {
        &self.sample_mean
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    /// `M⁻¹ Σ (x_m − μ)ᵀ P (x_m − μ) + log det Σ̂`.
    pub fn objective(&self, mu: &DVector<f64>) -> f64 {
        let p = &self.fixed_cov;
        self.mean_sample_quad - 2.0 * quad_cross(p, mu, &self.sample_mean)
            + p.inv_quad_form(mu)
            + p.log_det()
    }
}

/// `aᵀ P b` via the polarization identity.
fn quad_cross(p: &SpdMatrix, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    0.25 * (p.inv_quad_form(&(a + b)) - p.inv_quad_form(&(a - b)))
}

#[derive(Clone, Debug)]
pub struct MeanSolution {
    pub mu_star: DVector<f64>,
    pub gamma_star: f64,
    pub optimal_value: f64,
}

/// Dual `g(γ) = γ(ρ² − μ̂ᵀPμ̂) + (x̄ + γμ̂)ᵀP(x̄ + γμ̂)/(1 + γ)`, stored through
/// the three quadratic forms it depends on.
struct MeanDual {
    rho_sq: f64,
    /// `μ̂ᵀPμ̂`
    nominal_quad: f64,
    /// `μ̂ᵀPx̄`
    cross: f64,
    /// `x̄ᵀPx̄`
    sample_quad: f64,
}

impl MeanDual {
    /// `[(2+γ)μ̂ − x̄]ᵀ P (x̄ + γμ̂)`
    fn numerator(&self, gamma: f64) -> f64 {
        2.0 * self.cross + gamma * (2.0 + gamma) * self.nominal_quad - self.sample_quad
    }

    #[cfg(test)]
    fn value(&self, gamma: f64) -> f64 {
        let quad = self.sample_quad + 2.0 * gamma * self.cross + gamma * gamma * self.nominal_quad;
        gamma * (self.rho_sq - self.nominal_quad) + quad / (1.0 + gamma)
    }

    fn first(&self, gamma: f64) -> f64 {
        self.rho_sq - self.nominal_quad + self.numerator(gamma) / (1.0 + gamma).powi(2)
    }

    fn second(&self, gamma: f64) -> f64 {
        2.0 * self.nominal_quad / (1.0 + gamma)
            - 2.0 * self.numerator(gamma) / (1.0 + gamma).powi(3)
    }
}

pub fn solve_mean(p: &MeanProblem) -> Result<MeanSolution> {
    let cov = &p.fixed_cov;
    let gap = fr_mean_distance(&p.sample_mean, &p.nominal_mean, cov)?;
    if gap <= p.radius {
        let mu_star = p.sample_mean.clone();
        return Ok(MeanSolution {
            optimal_value: p.objective(&mu_star),
            mu_star,
            gamma_star: 0.0,
        });
    }
    let dual = MeanDual {
        rho_sq: p.radius * p.radius,
        nominal_quad: cov.inv_quad_form(&p.nominal_mean),
        cross: quad_cross(cov, &p.nominal_mean, &p.sample_mean),
        sample_quad: cov.inv_quad_form(&p.sample_mean),
    };
    // g' is negative at γ = 0 here, so only the upper end needs searching.
    let (_, hi) = bracket(|g| dual.first(g), 1.0, BRACKET_STEPS)?;
    let tol = RESIDUAL_TOL * dual.rho_sq.max(1.0);
    let root = safeguarded_newton(
        |g| (dual.first(g), dual.second(g)),
        0.0,
        hi,
        tol,
        1e-15,
        500,
    );
    let gamma = root.x;
    let mu_star = (&p.sample_mean + &p.nominal_mean * gamma) / (1.0 + gamma);
    Ok(MeanSolution {
        optimal_value: p.objective(&mu_star),
        mu_star,
        gamma_star: gamma,
    })
}

/// Optimistic log-likelihood of `observations` over a ball of means around
/// `mean` with covariance fixed at `cov`. Returns the value and `μ*`.
///
/// A zero radius returns the nominal log-likelihood.
pub fn optimistic_loglik_mean(
    observations: &[DVector<f64>],
    mean: &DVector<f64>,
    cov: &SpdMatrix,
    radius: MeanRadius,
) -> Result<(f64, DVector<f64>)> {
    if radius.distance() == 0.0 {
        if observations.is_empty() {
            return Err(Error::EmptyObservations);
        }
        check_dims(cov.dim(), mean.len())?;
        let mut total = 0.0;
        for x in observations {
            check_dims(cov.dim(), x.len())?;
            total += cov.inv_quad_form(&(x - mean));
        }
        let value = total / observations.len() as f64 + cov.log_det();
        return Ok((-value, mean.clone()));
    }
    let p = MeanProblem::new(observations, mean.clone(), cov.clone(), radius)?;
    let sol = solve_mean(&p)?;
    Ok((-sol.optimal_value, sol.mu_star))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{gaussian_vector, random_spd, rng};
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn distance_examples() {
        let mut r = rng(1);
        let cov = random_spd(&mut r, 3, 0.5, 2.0);
        let a = gaussian_vector(&mut r, 3);
        assert_eq!(fr_mean_distance(&a, &a, &cov).unwrap(), 0.0);
        let i = SpdMatrix::identity(2);
        assert_relative_eq!(
            fr_mean_distance(&v(&[3.0, 0.0]), &v(&[0.0, 4.0]), &i).unwrap(),
            5.0
        );
        assert_eq!(kl_mean_divergence(&a, &a, &cov).unwrap(), 0.0);
        assert_relative_eq!(
            kl_mean_divergence(&v(&[1.0, 1.0]), &v(&[0.0, 0.0]), &i).unwrap(),
            1.0
        );
        for _ in 0..20 {
            let b = gaussian_vector(&mut r, 3);
            let kl = kl_mean_divergence(&a, &b, &cov).unwrap();
            assert_eq!(kl, kl_mean_divergence(&b, &a, &cov).unwrap());
            let d = fr_mean_distance(&a, &b, &cov).unwrap();
            assert_relative_eq!(2.0 * kl, d * d, epsilon = 1e-10);
        }
        assert!(fr_mean_distance(&v(&[1.0]), &a, &cov).is_err());
    }

    #[test]
    fn inside_ball_returns_sample_mean() {
        let obs = vec![v(&[0.1, 0.0]), v(&[0.3, 0.2])];
        let p = MeanProblem::new(
            &obs,
            v(&[0.0, 0.0]),
            SpdMatrix::identity(2),
            MeanRadius::Fr(1.0),
        )
        .unwrap();
        let sol = solve_mean(&p).unwrap();
        assert_eq!(sol.gamma_star, 0.0);
        assert_eq!(sol.mu_star, v(&[0.2, 0.1]));
    }

    #[test]
    fn scalar_projection() {
        let p = MeanProblem::new(
            &[v(&[2.0])],
            v(&[0.0]),
            SpdMatrix::identity(1),
            MeanRadius::Fr(1.0),
        )
        .unwrap();
        let sol = solve_mean(&p).unwrap();
        assert_relative_eq!(sol.mu_star[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.gamma_star, 1.0, epsilon = 1e-10);
        assert_relative_eq!(sol.optimal_value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn huge_radius_is_unconstrained() {
        let mut r = rng(2);
        let cov = random_spd(&mut r, 3, 0.5, 2.0);
        let obs: Vec<_> = (0..5).map(|_| gaussian_vector(&mut r, 3)).collect();
        let p =
            MeanProblem::new(&obs, DVector::zeros(3), cov.clone(), MeanRadius::Fr(1e6)).unwrap();
        let sol = solve_mean(&p).unwrap();
        let xbar = obs.iter().sum::<DVector<f64>>() / 5.0;
        assert!((&sol.mu_star - &xbar).norm() < 1e-12);
        let pooled = obs
            .iter()
            .map(|x| cov.inv_quad_form(&(x - &xbar)))
            .sum::<f64>()
            / 5.0;
        assert_relative_eq!(sol.optimal_value, pooled + cov.log_det(), epsilon = 1e-10);
    }

    #[test]
    fn matches_closed_form_multiplier() {
        let mut r = rng(3);
        for _ in 0..30 {
            let cov = random_spd(&mut r, 4, 0.2, 5.0);
            let mu_hat = gaussian_vector(&mut r, 4);
            let obs: Vec<_> = (0..3).map(|_| &gaussian_vector(&mut r, 4) * 3.0).collect();
            let p =
                MeanProblem::new(&obs, mu_hat.clone(), cov.clone(), MeanRadius::Fr(0.5)).unwrap();
            let gap = fr_mean_distance(p.sample_mean(), &mu_hat, &cov).unwrap();
            let sol = solve_mean(&p).unwrap();
            if gap > 0.5 {
                assert_relative_eq!(sol.gamma_star, gap / 0.5 - 1.0, max_relative = 1e-9);
                let d = fr_mean_distance(&sol.mu_star, &mu_hat, &cov).unwrap();
                assert!((d - 0.5).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn dual_derivatives_match_finite_differences() {
        let dual = MeanDual {
            rho_sq: 0.3,
            nominal_quad: 1.2,
            cross: -0.4,
            sample_quad: 2.5,
        };
        for gamma in [0.01f64, 0.2, 1.0, 5.0, 50.0] {
            let h = 1e-6 * gamma.max(1.0);
            let fd1 = (dual.value(gamma + h) - dual.value(gamma - h)) / (2.0 * h);
            let fd2 = (dual.first(gamma + h) - dual.first(gamma - h)) / (2.0 * h);
            assert_relative_eq!(dual.first(gamma), fd1, max_relative = 1e-5);
            assert_relative_eq!(dual.second(gamma), fd2, max_relative = 1e-5);
        }
    }

    #[test]
    fn kl_radius_is_equivalent() {
        let mut r = rng(4);
        let cov = random_spd(&mut r, 3, 0.5, 2.0);
        let obs: Vec<_> = (0..4)
            .map(|_| &gaussian_vector(&mut r, 3) + v(&[2.0, 2.0, 2.0]))
            .collect();
        let mu = DVector::zeros(3);
        let (a, ma) = optimistic_loglik_mean(&obs, &mu, &cov, MeanRadius::Kl(0.3)).unwrap();
        let (b, mb) =
            optimistic_loglik_mean(&obs, &mu, &cov, MeanRadius::Fr(0.6f64.sqrt())).unwrap();
        assert!((ma - mb).norm() < 1e-12);
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn value_monotone_and_on_segment() {
        let mut r = rng(5);
        let cov = random_spd(&mut r, 3, 0.5, 2.0);
        let obs: Vec<_> = (0..4)
            .map(|_| &gaussian_vector(&mut r, 3) + v(&[3.0, 0.0, 0.0]))
            .collect();
        let mu = gaussian_vector(&mut r, 3);
        let xbar = obs.iter().sum::<DVector<f64>>() / 4.0;
        let mut last = f64::NEG_INFINITY;
        for rho in [0.0, 0.1, 0.3, 1.0, 2.0, 5.0, 20.0] {
            let (val, m) = optimistic_loglik_mean(&obs, &mu, &cov, MeanRadius::Fr(rho)).unwrap();
            assert!(val >= last - 1e-12);
            last = val;
            // m − μ̂ is parallel to x̄ − μ̂
            let a = &m - &mu;
            let b = &xbar - &mu;
            assert!((a.dot(&b).abs() - a.norm() * b.norm()).abs() < 1e-9 * b.norm().powi(2));
        }
    }
}
