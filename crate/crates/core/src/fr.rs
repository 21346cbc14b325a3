//! Fisher-Rao geometry of zero-mean Gaussians, i.e. the affine-invariant
//! geometry of the SPD cone.
//!
//! `d(a, b) = ‖log(b^{-1/2} a b^{-1/2})‖_F / √2`

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spd::{sym_eig, symmetrize, SpdMatrix, SymMatrix};

/// Relative slack for the inside-ball test of [`FrBall::project`].
pub const BALL_SLACK: f64 = 1e-12;

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// `base^{1/2}` and `base^{-1/2}`, computed once.
#[derive(Clone, Debug)]
pub(crate) struct Frame {
    sqrt: DMatrix<f64>,
    inv_sqrt: DMatrix<f64>,
}

impl Frame {
    pub(crate) fn new(base: &SpdMatrix) -> Self {
        Frame {
            sqrt: base.sqrt().as_matrix().clone(),
            inv_sqrt: base.inv_sqrt().as_matrix().clone(),
        }
    }

    /// `base^{-1/2} m base^{-1/2}`
    pub(crate) fn whiten(&self, m: &DMatrix<f64>) -> SymMatrix {
        SymMatrix::from_raw(&self.inv_sqrt * m * &self.inv_sqrt)
    }

    /// `base^{1/2} m base^{1/2}`
    pub(crate) fn color(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&(&self.sqrt * m * &self.sqrt))
    }

    pub(crate) fn dim(&self) -> usize {
        self.sqrt.nrows()
    }
}

/// `√(Σ log² λ_i) / √2` over the given eigenvalues.
fn log_spectrum_radius<'a>(values: impl Iterator<Item = &'a f64>) -> f64 {
    values.map(|l| l.ln().powi(2)).sum::<f64>().sqrt() * std::f64::consts::FRAC_1_SQRT_2
}

/// Fisher-Rao distance between zero-mean Gaussians with covariances `a` and `b`.
pub fn fr_distance(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    distance_in_frame(&Frame::new(b), a)
}

fn distance_in_frame(frame: &Frame, point: &SpdMatrix) -> Result<f64> {
    check_dims(frame.dim(), point.dim())?;
    let eig = sym_eig(&frame.whiten(point.as_matrix()))?;
    if let Some(&bad) = eig.values.iter().find(|&&l| !(l > 0.0)) {
        return Err(Error::NotPositiveDefinite {
            eigenvalue: bad,
            floor: 0.0,
        });
    }
    Ok(log_spectrum_radius(eig.values.iter()))
}

/// Point at time `t ∈ [0, 1]` on the geodesic from `a` to `b`:
/// `a^{1/2} (a^{-1/2} b a^{-1/2})^t a^{1/2}`.
pub fn geodesic(a: &SpdMatrix, b: &SpdMatrix, t: f64) -> Result<SpdMatrix> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::OutOfRange {
            name: "t",
            value: t,
            lo: 0.0,
            hi: 1.0,
        });
    }
    check_dims(a.dim(), b.dim())?;
    if t == 0.0 {
        return Ok(a.clone());
    }
    if t == 1.0 {
        return Ok(b.clone());
    }
    geodesic_extrapolated(a, b, t)
}

/// Geodesic through `a` (at 0) and `b` (at 1), evaluated at any real `t`.
pub fn geodesic_extrapolated(a: &SpdMatrix, b: &SpdMatrix, t: f64) -> Result<SpdMatrix> {
    check_dims(a.dim(), b.dim())?;
    if !t.is_finite() {
        return Err(Error::InvalidParameter {
            name: "t",
            reason: format!("{t} is not finite"),
        });
    }
    let frame = Frame::new(a);
    let eig = sym_eig(&frame.whiten(b.as_matrix()))?;
    let inner = eig.compose(|l| l.powf(t));
    SpdMatrix::from_raw(frame.color(&inner))
}

/// Fisher-Rao inner product `½ Tr(v base⁻¹ w base⁻¹)` on the tangent space at `base`.
pub fn metric_inner(base: &SpdMatrix, v: &SymMatrix, w: &SymMatrix) -> Result<f64> {
    check_dims(base.dim(), v.dim())?;
    check_dims(base.dim(), w.dim())?;
    let inv = base.inverse();
    let left = v.as_matrix() * inv.as_matrix();
    let right = w.as_matrix() * inv.as_matrix();
    // Tr(XY) = Σ_ij X_ij Y_ji
    Ok(0.5 * left.dot(&right.transpose()))
}

/// Exponential map `base^{1/2} exp(base^{-1/2} v base^{-1/2}) base^{1/2}`.
pub fn exp_map(base: &SpdMatrix, v: &SymMatrix) -> Result<SpdMatrix> {
    check_dims(base.dim(), v.dim())?;
    exp_in_frame(&Frame::new(base), v)
}

pub(crate) fn exp_in_frame(frame: &Frame, v: &SymMatrix) -> Result<SpdMatrix> {
    let eig = sym_eig(&frame.whiten(v.as_matrix()))?;
    SpdMatrix::from_raw(frame.color(&eig.compose(f64::exp)))
}

/// Logarithm map, the inverse of [`exp_map`] at `base`.
pub fn log_map(base: &SpdMatrix, target: &SpdMatrix) -> Result<SymMatrix> {
    check_dims(base.dim(), target.dim())?;
    let frame = Frame::new(base);
    let eig = sym_eig(&frame.whiten(target.as_matrix()))?;
    if let Some(&bad) = eig.values.iter().find(|&&l| !(l > 0.0)) {
        return Err(Error::NotPositiveDefinite {
            eigenvalue: bad,
            floor: 0.0,
        });
    }
    Ok(SymMatrix::from_raw(frame.color(&eig.compose(f64::ln))))
}

/// Closed Fisher-Rao ball `{Σ : d(Σ, center) ≤ radius}`.
#[derive(Clone, Debug)]
pub struct FrBall {
    center: SpdMatrix,
    radius: f64,
    frame: Frame,
}

impl FrBall {
    pub fn new(center: SpdMatrix, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParameter {
                name: "radius",
                reason: format!("{radius} is not a finite nonnegative number"),
            });
        }
        let frame = Frame::new(&center);
        Ok(FrBall {
            center,
            radius,
            frame,
        })
    }

    pub fn center(&self) -> &SpdMatrix {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    /// `d(center, point)`.
    pub fn distance_from_center(&self, point: &SpdMatrix) -> Result<f64> {
        distance_in_frame(&self.frame, point)
    }

    /// Fisher-Rao projection of `point` onto the ball.
    ///
    /// Points within `radius·(1 + 1e-12)` of the center are returned unchanged.
    /// Others are pulled back along the geodesic from the center.
    pub fn project(&self, point: &SpdMatrix) -> Result<SpdMatrix> {
        check_dims(self.dim(), point.dim())?;
        let eig = sym_eig(&self.frame.whiten(point.as_matrix()))?;
        if let Some(&bad) = eig.values.iter().find(|&&l| !(l > 0.0)) {
            return Err(Error::NotPositiveDefinite {
                eigenvalue: bad,
                floor: 0.0,
            });
        }
        let dist = log_spectrum_radius(eig.values.iter());
        if dist <= self.radius * (1.0 + BALL_SLACK) {
            return Ok(point.clone());
        }
        if self.radius == 0.0 {
            return Ok(self.center.clone());
        }
        let t = self.radius / dist;
        SpdMatrix::from_raw(self.frame.color(&eig.compose(|l| l.powf(t))))
    }
}

/// Projection onto `ball`; see [`FrBall::project`].
pub fn project_fr_ball(ball: &FrBall, point: &SpdMatrix) -> Result<SpdMatrix> {
    ball.project(point)
}
