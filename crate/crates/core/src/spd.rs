//! Dense symmetric and symmetric positive definite matrices.
//!
//! Every matrix function goes through one symmetric eigendecomposition
//! (`sym_eig`). Results of manifold operations are symmetrized as
//! `(A + Aᵀ)/2` before they are validated.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Default lower bound on the eigenvalues of an [`SpdMatrix`].
pub const DEFAULT_EIGEN_FLOOR: f64 = 1e-12;

/// Per-element symmetry tolerance, scaled by `max(1, max|a_ij|)`.
const SYMMETRY_TOL: f64 = 1e-10;

const EIGEN_MAX_SWEEPS: usize = 10_000;

/// Returns `(m + mᵀ)/2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn check_square_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let scale = m.amax().max(1.0);
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let gap = (m[(i, j)] - m[(j, i)]).abs();
            if gap > SYMMETRY_TOL * scale {
                return Err(Error::NotSymmetric {
                    row: i,
                    col: j,
                    gap,
                });
            }
        }
    }
    Ok(())
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors (columns).
#[derive(Clone, Debug, PartialEq)]
pub struct Eigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl Eigen {
    /// `Q diag(f(λ)) Qᵀ`, symmetrized.
    pub fn compose(&self, mut f: impl FnMut(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[j]);
        }
        symmetrize(&(scaled * self.vectors.transpose()))
    }

    fn sorted(values: DVector<f64>, vectors: DMatrix<f64>) -> Self {
        let n = values.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let values = DVector::from_iterator(n, order.iter().map(|&i| values[i]));
        let vectors =
            DMatrix::from_columns(&order.iter().map(|&i| vectors.column(i)).collect::<Vec<_>>());
        Eigen { values, vectors }
    }

    /// Applies `f` to the eigenvalues, keeping the basis and restoring ascending order.
    fn mapped(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::sorted(self.values.map(f), self.vectors.clone())
    }
}

fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    match m.clone().try_inverse() {
        Some(inv) => m.norm() * inv.norm(),
        None => f64::INFINITY,
    }
}

fn decompose(m: &DMatrix<f64>) -> Result<Eigen> {
    let eig =
        SymmetricEigen::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_SWEEPS).ok_or_else(|| {
            Error::EigenFailure {
                condition: condition_estimate(m),
            }
        })?;
    Ok(Eigen::sorted(eig.eigenvalues, eig.eigenvectors))
}

/// Symmetric eigendecomposition with eigenvalues in ascending order.
pub fn sym_eig(m: &SymMatrix) -> Result<Eigen> {
    decompose(&m.0)
}

/// `Q diag(f(λ)) Qᵀ` for an SPD matrix with cached decomposition `Q diag(λ) Qᵀ`.
pub fn spectral_fn(m: &SpdMatrix, f: impl Fn(f64) -> f64) -> Result<SymMatrix> {
    m.map(f)
}

/// `log det m`, the sum of the log-eigenvalues.
pub fn log_det(m: &SpdMatrix) -> f64 {
    m.log_det()
}

/// `Tr(a b)` for symmetric `a`, `b`.
pub fn trace_inner(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(a.0.dot(&b.0))
}

/// A dense symmetric matrix with no definiteness requirement.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Validates squareness, finiteness and symmetry, then symmetrizes.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&m)?;
        check_symmetric(&m)?;
        Ok(SymMatrix(symmetrize(&m)))
    }

    /// Builds from any square matrix by taking its symmetric part.
    pub fn from_symmetric_part(m: &DMatrix<f64>) -> Result<Self> {
        check_square_finite(m)?;
        Ok(SymMatrix(symmetrize(m)))
    }

    pub(crate) fn from_raw(m: DMatrix<f64>) -> Self {
        SymMatrix(symmetrize(&m))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// Sample scatter `M⁻¹ Σ (x_m − center)(x_m − center)ᵀ`.
    pub fn scatter(observations: &[DVector<f64>], center: &DVector<f64>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::EmptyObservations);
        }
        let n = center.len();
        let mut acc = DMatrix::zeros(n, n);
        for x in observations {
            if x.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: x.len(),
                });
            }
            let d = x - center;
            acc.ger(1.0, &d, &d, 1.0);
        }
        acc /= observations.len() as f64;
        let s = SymMatrix::from_raw(acc);
        check_square_finite(&s.0)?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Adds `shift` to every diagonal entry.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += shift;
        }
        SymMatrix(m)
    }

    pub fn eig(&self) -> Result<Eigen> {
        sym_eig(self)
    }
}

impl Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &rhs.0)
    }
}

impl Mul<f64> for &SymMatrix {
    type Output = SymMatrix;
    fn mul(self, rhs: f64) -> SymMatrix {
        SymMatrix(&self.0 * rhs)
    }
}

impl Neg for &SymMatrix {
    type Output = SymMatrix;
    fn neg(self) -> SymMatrix {
        SymMatrix(-&self.0)
    }
}

impl fmt::Display for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A symmetric positive definite matrix together with its eigendecomposition.
///
/// Values are immutable; every operation returns a new matrix.
#[derive(Clone, Debug)]
pub struct SpdMatrix {
    entries: DMatrix<f64>,
    eig: Eigen,
}

impl SpdMatrix {
    /// Validates and decomposes `m` with the default eigenvalue floor.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        Self::with_floor(m, DEFAULT_EIGEN_FLOOR)
    }

    /// Validates and decomposes `m`, requiring every eigenvalue to exceed `floor`.
    pub fn with_floor(m: DMatrix<f64>, floor: f64) -> Result<Self> {
        check_square_finite(&m)?;
        check_symmetric(&m)?;
        Self::from_symmetric(symmetrize(&m), floor)
    }

    /// Like [`with_floor`](Self::with_floor) but raises eigenvalues below `floor` up to it.
    ///
    /// Intended for estimator outputs that may be numerically singular.
    pub fn clamped(m: DMatrix<f64>, floor: f64) -> Result<Self> {
        check_square_finite(&m)?;
        check_symmetric(&m)?;
        let eig = decompose(&symmetrize(&m))?;
        if eig.values[0] > floor {
            return Self::from_eigen(eig, floor);
        }
        // Clamp to slightly above the floor so the result passes the strict check.
        let target = if floor > 0.0 {
            floor * (1.0 + 1e-9)
        } else {
            f64::MIN_POSITIVE
        };
        Self::from_eigen(eig.mapped(|l| l.max(target)), floor)
    }

    pub fn from_sym(s: SymMatrix) -> Result<Self> {
        Self::from_symmetric(s.0, DEFAULT_EIGEN_FLOOR)
    }

    /// Takes the symmetric part of an arbitrary square matrix and validates it.
    pub(crate) fn from_raw(m: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&m)?;
        Self::from_symmetric(symmetrize(&m), DEFAULT_EIGEN_FLOOR)
    }

    fn from_symmetric(m: DMatrix<f64>, floor: f64) -> Result<Self> {
        let eig = decompose(&m)?;
        check_floor(&eig, floor)?;
        Ok(SpdMatrix { entries: m, eig })
    }

    fn from_eigen(eig: Eigen, floor: f64) -> Result<Self> {
        check_floor(&eig, floor)?;
        let entries = eig.compose(|l| l);
        Ok(SpdMatrix { entries, eig })
    }

    pub fn identity(n: usize) -> Self {
        SpdMatrix {
            entries: DMatrix::identity(n, n),
            eig: Eigen {
                values: DVector::from_element(n, 1.0),
                vectors: DMatrix::identity(n, n),
            },
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn to_sym(&self) -> SymMatrix {
        SymMatrix(self.entries.clone())
    }

    pub fn eigen(&self) -> &Eigen {
        &self.eig
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eig.values
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eig.values[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eig.values[self.dim() - 1]
    }

    /// `Q diag(f(λ)) Qᵀ`; fails if `f` is not finite at some eigenvalue.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<SymMatrix> {
        check_finite_image(&self.eig.values, &f)?;
        Ok(SymMatrix(self.eig.compose(f)))
    }

    /// Spectral function whose image is again SPD; reuses the eigenbasis.
    pub fn map_spd(&self, f: impl Fn(f64) -> f64) -> Result<SpdMatrix> {
        check_finite_image(&self.eig.values, &f)?;
        Self::from_eigen(self.eig.mapped(f), DEFAULT_EIGEN_FLOOR)
    }

    pub fn sqrt(&self) -> SpdMatrix {
        self.power(0.5)
    }

    pub fn inv_sqrt(&self) -> SpdMatrix {
        self.power(-0.5)
    }

    pub fn inverse(&self) -> SpdMatrix {
        self.power(-1.0)
    }

    /// Real power `m^t`.
    pub fn power(&self, t: f64) -> SpdMatrix {
        let eig = self.eig.mapped(|l| l.powf(t));
        let entries = eig.compose(|l| l);
        SpdMatrix { entries, eig }
    }

    /// Matrix logarithm.
    pub fn ln(&self) -> SymMatrix {
        SymMatrix(self.eig.compose(f64::ln))
    }

    pub fn log_det(&self) -> f64 {
        self.eig.values.iter().map(|l| l.ln()).sum()
    }

    /// `vᵀ m⁻¹ v`.
    pub fn inv_quad_form(&self, v: &DVector<f64>) -> f64 {
        let proj = self.eig.vectors.tr_mul(v);
        proj.iter()
            .zip(self.eig.values.iter())
            .map(|(p, l)| p * p / l)
            .sum()
    }

    /// `Tr(s m⁻¹)`.
    pub fn trace_inv_product(&self, s: &SymMatrix) -> f64 {
        let rotated = self
            .eig
            .vectors
            .tr_mul(&(s.as_matrix() * &self.eig.vectors));
        (0..self.dim())
            .map(|i| rotated[(i, i)] / self.eig.values[i])
            .sum()
    }

    /// `a m aᵀ` as a plain matrix.
    pub fn congruence(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&(a * &self.entries * a.transpose()))
    }

    /// Frobenius norm of `self − other`.
    pub fn frobenius_distance(&self, other: &SpdMatrix) -> f64 {
        (&self.entries - &other.entries).norm()
    }
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl fmt::Display for SpdMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.entries)
    }
}

fn check_floor(eig: &Eigen, floor: f64) -> Result<()> {
    let lowest = eig.values[0];
    if !(lowest > floor) {
        return Err(Error::NotPositiveDefinite {
            eigenvalue: lowest,
            floor,
        });
    }
    Ok(())
}

fn check_finite_image(values: &DVector<f64>, f: &impl Fn(f64) -> f64) -> Result<()> {
    for &l in values.iter() {
        if !f(l).is_finite() {
            return Err(Error::Domain { eigenvalue: l });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_spd, rng};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn orthogonality_error(q: &DMatrix<f64>) -> f64 {
        (q.transpose() * q - DMatrix::identity(q.ncols(), q.ncols())).norm()
    }

    #[test]
    fn eig_of_identity() {
        let e = sym_eig(&SymMatrix::identity(3)).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 1.0, 1.0]);
        assert!(orthogonality_error(&e.vectors) < 1e-10);
    }

    #[test]
    fn eig_of_diagonal_is_sorted() {
        let e = sym_eig(&SymMatrix::from_diagonal(&[9.0, 1.0, 4.0])).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 4.0, 9.0]);
        assert_relative_eq!(e.vectors[(1, 0)].abs(), 1.0);
        assert_relative_eq!(e.vectors[(2, 1)].abs(), 1.0);
        assert_relative_eq!(e.vectors[(0, 2)].abs(), 1.0);
    }

    #[test]
    fn eig_of_two_by_two() {
        let m = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let e = sym_eig(&m).unwrap();
        assert_relative_eq!(e.values[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(e.values[1], 3.0, epsilon = 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // eigenvectors up to sign
        assert_relative_eq!(
            (e.vectors[(0, 0)] * e.vectors[(1, 0)]),
            -0.5,
            epsilon = 1e-14
        );
        assert_relative_eq!(e.vectors[(0, 1)].abs(), h, epsilon = 1e-14);
        assert_relative_eq!(e.vectors[(0, 1)], e.vectors[(1, 1)], epsilon = 1e-14);
    }

    #[test]
    fn rejects_asymmetric_and_non_finite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(SymMatrix::new(m), Err(Error::NotSymmetric { .. })));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, f64::NAN, 1.0]);
        assert!(matches!(SpdMatrix::new(m), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn small_asymmetry_is_symmetrized() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0 + 1e-12, 1.0, 2.0]);
        let s = SpdMatrix::new(m).unwrap();
        assert_eq!(s.as_matrix()[(0, 1)], s.as_matrix()[(1, 0)]);
    }

    #[test]
    fn floor_violation_raises_unless_clamped() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            SpdMatrix::new(m.clone()),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let c = SpdMatrix::clamped(m, 1e-6).unwrap();
        assert!(c.min_eigenvalue() > 1e-6);
        assert_relative_eq!(c.max_eigenvalue(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn custom_floor() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1e-3, 1.0]));
        assert!(SpdMatrix::with_floor(m.clone(), 1e-2).is_err());
        assert!(SpdMatrix::with_floor(m, 1e-4).is_ok());
    }

    #[test]
    fn log_of_identity_is_zero() {
        let l = spectral_fn(&SpdMatrix::identity(4), f64::ln).unwrap();
        assert_eq!(l.frobenius_norm(), 0.0);
    }

    #[test]
    fn log_of_diagonal() {
        let m = SpdMatrix::from_diagonal(&[E, E * E]).unwrap();
        let l = spectral_fn(&m, f64::ln).unwrap();
        assert_relative_eq!(l.as_matrix()[(0, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(l.as_matrix()[(1, 1)], 2.0, epsilon = 1e-14);
        assert_eq!(l.as_matrix()[(0, 1)], 0.0);
    }

    #[test]
    fn domain_error_names_eigenvalue() {
        let m = SpdMatrix::from_diagonal(&[1.0, 4.0]).unwrap();
        match spectral_fn(&m, |x| 1.0 / (x - 4.0)) {
            Err(Error::Domain { eigenvalue }) => assert_eq!(eigenvalue, 4.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn log_det_examples() {
        assert_eq!(SpdMatrix::identity(4).log_det(), 0.0);
        let m = SpdMatrix::from_diagonal(&[2.0, 8.0]).unwrap();
        assert_relative_eq!(log_det(&m), 16f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn log_det_matches_eigenvalues_and_cholesky() {
        let mut r = rng(11);
        for n in [2, 5, 12] {
            let a = random_spd(&mut r, n, 0.1, 10.0);
            let e = sym_eig(&a.to_sym()).unwrap();
            let sum: f64 = e.values.iter().map(|l| l.ln()).sum();
            assert_relative_eq!(a.log_det(), sum, epsilon = 1e-10);
            let chol = a.as_matrix().clone().cholesky().unwrap();
            let via_chol: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            assert_relative_eq!(a.log_det(), via_chol, epsilon = 1e-10);
        }
    }

    #[test]
    fn trace_inner_examples() {
        let i5 = SymMatrix::identity(5);
        assert_eq!(trace_inner(&i5, &i5).unwrap(), 5.0);
        let a = SymMatrix::from_diagonal(&[1.0, 2.0]);
        let b = SymMatrix::from_diagonal(&[3.0, 4.0]);
        assert_eq!(trace_inner(&a, &b).unwrap(), 11.0);
        assert!(matches!(
            trace_inner(&a, &i5),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn trace_inner_matches_product_trace() {
        let mut r = rng(3);
        let a = random_spd(&mut r, 6, 0.5, 3.0).to_sym();
        let b = &random_spd(&mut r, 6, 0.5, 3.0).to_sym() * -1.5;
        let direct = (a.as_matrix() * b.as_matrix()).trace();
        assert_relative_eq!(trace_inner(&a, &b).unwrap(), direct, epsilon = 1e-12);
        assert_eq!(trace_inner(&a, &b).unwrap(), trace_inner(&b, &a).unwrap());
    }

    #[test]
    fn scalar_congruence() {
        let a = SpdMatrix::from_diagonal(&[3.5]).unwrap();
        let m = DMatrix::from_element(1, 1, 1.7);
        let c = SymMatrix::new(a.congruence(&m)).unwrap();
        assert_eq!(sym_eig(&c).unwrap().values[0], 1.7 * 3.5 * 1.7);
    }

    #[test]
    fn inverse_helpers_agree_with_dense_inverse() {
        let mut r = rng(5);
        let a = random_spd(&mut r, 7, 0.2, 5.0);
        let inv = a.as_matrix().clone().try_inverse().unwrap();
        assert!((a.inverse().as_matrix() - &inv).norm() < 1e-10);
        let v = DVector::from_fn(7, |i, _| i as f64 - 3.0);
        assert_relative_eq!(a.inv_quad_form(&v), v.dot(&(&inv * &v)), epsilon = 1e-10);
        let s = random_spd(&mut r, 7, 0.2, 5.0).to_sym();
        assert_relative_eq!(
            a.trace_inv_product(&s),
            (s.as_matrix() * &inv).trace(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn scatter_of_observations() {
        let obs = vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![-1.0, 2.0]),
        ];
        let s = SymMatrix::scatter(&obs, &DVector::zeros(2)).unwrap();
        assert_eq!(
            s.as_matrix(),
            &DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 2.0])
        );
        assert!(matches!(
            SymMatrix::scatter(&[], &DVector::zeros(2)),
            Err(Error::EmptyObservations)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn reconstruction_and_orthogonality(seed in any::<u64>(), n in 1usize..30) {
            let a = random_spd(&mut rng(seed), n, 1e-3, 1e3);
            let e = a.eigen();
            let rebuilt = e.compose(|l| l);
            prop_assert!((&rebuilt - a.as_matrix()).norm() <= 1e-8 * n as f64);
            prop_assert!(orthogonality_error(&e.vectors) <= 1e-10);
            prop_assert!(e.values.as_slice().windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn identity_function_is_identity(seed in any::<u64>(), n in 1usize..30) {
            let a = random_spd(&mut rng(seed), n, 1e-2, 1e2);
            let same = spectral_fn(&a, |l| l).unwrap();
            prop_assert!((same.as_matrix() - a.as_matrix()).norm() <= 1e-10 * a.as_matrix().norm().max(1.0));
        }

        #[test]
        fn square_root_squares_back(seed in any::<u64>(), n in 1usize..50) {
            let a = random_spd(&mut rng(seed), n, 1e-2, 1e2);
            let r = spectral_fn(&a, f64::sqrt).unwrap();
            let sq = r.as_matrix() * r.as_matrix();
            prop_assert!((sq - a.as_matrix()).norm() <= 1e-8 * a.as_matrix().norm().max(1.0));
        }

        #[test]
        fn exp_log_round_trip(seed in any::<u64>(), n in 1usize..20) {
            let a = random_spd(&mut rng(seed), n, 0.2, 5.0);
            let ex = a.map_spd(f64::exp).unwrap();
            let back = SpdMatrix::from_sym(ex.to_sym()).unwrap().ln();
            prop_assert!((back.as_matrix() - a.as_matrix()).norm() <= 1e-8);
        }

        #[test]
        fn log_det_additive_for_commuting_pairs(seed in any::<u64>(), n in 1usize..20) {
            let mut r = rng(seed);
            let a = random_spd(&mut r, n, 0.1, 10.0);
            // b shares a's eigenbasis.
            let b = a.map_spd(|l| 1.0 + l * l).unwrap();
            let ab = SpdMatrix::from_raw(a.as_matrix() * b.as_matrix()).unwrap();
            prop_assert!((ab.log_det() - a.log_det() - b.log_det()).abs() <= 1e-8);
        }
    }
}
