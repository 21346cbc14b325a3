//! C interface to `optilik`.
//!
//! Matrices cross the boundary as row-major `double` arrays. SPD matrices are
//! held behind the opaque [`OptilikSpd`] handle, created by
//! [`optilik_spd_new`] and released with [`optilik_spd_free`]. Every fallible
//! call returns an [`OptilikStatus`]; on failure [`optilik_last_error`]
//! describes what went wrong on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{DMatrix, DVector};
use optilik::{Error, FrSolverOptions, MeanRadius, SpdMatrix};

/// Fisher-Rao ball over covariances.
pub const OPTILIK_DIVERGENCE_FR: u32 = 0;
/// KL ball over covariances.
pub const OPTILIK_DIVERGENCE_KL: u32 = 1;
/// Fisher-Rao ball over means, covariance fixed.
pub const OPTILIK_DIVERGENCE_FR_MEAN: u32 = 2;
/// KL ball over means, covariance fixed.
pub const OPTILIK_DIVERGENCE_KL_MEAN: u32 = 3;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptilikStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotPositiveDefinite = 4,
    SolverFailure = 5,
    Panic = 6,
}

/// Opaque symmetric positive definite matrix.
pub struct OptilikSpd {
    inner: SpdMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(OptilikStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::DimensionMismatch { .. }
            | Error::NotSquare { .. }
            | Error::LengthMismatch { .. } => OptilikStatus::DimensionMismatch,
            Error::NotPositiveDefinite { .. }
            | Error::NotPositiveSemidefinite { .. }
            | Error::Domain { .. } => OptilikStatus::NotPositiveDefinite,
            Error::Breakdown { .. } | Error::BracketFailure { .. } | Error::EigenFailure { .. } => {
                OptilikStatus::SolverFailure
            }
            _ => OptilikStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(OptilikStatus::NullPointer, format!("{name} is null"))
}

/// Runs `f`, converting failures and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OptilikStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            OptilikStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            OptilikStatus::Panic
        }
    }
}

unsafe fn spd_ref<'a>(p: *const OptilikSpd, name: &str) -> Result<&'a SpdMatrix, Failure> {
    p.as_ref().map(|s| &s.inner).ok_or_else(|| null(name))
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn boxed(m: SpdMatrix) -> *mut OptilikSpd {
    Box::into_raw(Box::new(OptilikSpd { inner: m }))
}

/// Message for the most recent failure on this thread; empty after a success.
/// The pointer stays valid until the next `optilik_*` call on the same thread.
#[no_mangle]
pub extern "C" fn optilik_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn optilik_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Creates an SPD matrix from `dim * dim` row-major entries. The input is
/// symmetrized; it must be symmetric to within rounding and positive definite.
///
/// # Safety
/// `entries` must point to `dim * dim` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn optilik_spd_new(
    entries: *const f64,
    dim: usize,
    out: *mut *mut OptilikSpd,
) -> OptilikStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if dim == 0 {
            return Err(Failure(
                OptilikStatus::InvalidArgument,
                "dim must be positive".into(),
            ));
        }
        let len = dim
            .checked_mul(dim)
            .ok_or_else(|| Failure(OptilikStatus::InvalidArgument, "dim too large".into()))?;
        let values = slice(entries, len, "entries")?;
        let m = SpdMatrix::new(DMatrix::from_row_slice(dim, dim, values))?;
        *out = boxed(m);
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `spd` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn optilik_spd_free(spd: *mut OptilikSpd) {
    if !spd.is_null() {
        drop(Box::from_raw(spd));
    }
}

/// Dimension of the matrix, or 0 for null.
///
/// # Safety
/// `spd` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn optilik_spd_dim(spd: *const OptilikSpd) -> usize {
    spd.as_ref().map_or(0, |s| s.inner.dim())
}

/// Copies the entries, row-major, into `out` (length `len`, at least `dim * dim`).
///
/// # Safety
/// `spd` must be a live handle; `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn optilik_spd_entries(
    spd: *const OptilikSpd,
    out: *mut f64,
    len: usize,
) -> OptilikStatus {
    guard(|| {
        let m = spd_ref(spd, "spd")?;
        let n = m.dim();
        if len < n * n {
            return Err(Failure(
                OptilikStatus::DimensionMismatch,
                format!("buffer holds {len} values, need {}", n * n),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let dst = std::slice::from_raw_parts_mut(out, n * n);
        for (i, row) in m.as_matrix().row_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                dst[i * n + j] = *v;
            }
        }
        Ok(())
    })
}

/// Fisher-Rao distance between `N(0, a)` and `N(0, b)`.
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn optilik_fr_distance(
    a: *const OptilikSpd,
    b: *const OptilikSpd,
    out: *mut f64,
) -> OptilikStatus {
    guard(|| {
        let (a, b) = (spd_ref(a, "a")?, spd_ref(b, "b")?);
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = optilik::fr_distance(a, b)?;
        Ok(())
    })
}

/// `KL(N(0, p) ‖ N(0, q))`.
///
/// # Safety
/// `p` and `q` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn optilik_kl_divergence(
    p: *const OptilikSpd,
    q: *const OptilikSpd,
    out: *mut f64,
) -> OptilikStatus {
    guard(|| {
        let (p, q) = (spd_ref(p, "p")?, spd_ref(q, "q")?);
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = optilik::kl_divergence(p, q)?;
        Ok(())
    })
}

/// Point at fraction `t ∈ [0, 1]` along the Fisher-Rao geodesic from `a` to `b`.
/// The result is a new handle owned by the caller.
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn optilik_geodesic(
    a: *const OptilikSpd,
    b: *const OptilikSpd,
    t: f64,
    out: *mut *mut OptilikSpd,
) -> OptilikStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let (a, b) = (spd_ref(a, "a")?, spd_ref(b, "b")?);
        *out = boxed(optilik::geodesic(a, b, t)?);
        Ok(())
    })
}

/// Optimistic log-likelihood of `count` observations (row-major, `count × dim`)
/// over a ball of radius `rho` around `N(mean, cov)`.
///
/// `divergence` is one of the `OPTILIK_DIVERGENCE_*` constants. The value
/// `−min(Tr(S Σ⁻¹) + log det Σ)` is written to `value_out`. For covariance
/// balls the optimal covariance is returned through `cov_out` when it is not
/// null; for mean balls the optimal mean (length `dim`) is copied to
/// `mean_out` when it is not null.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `cov` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn optilik_optimistic_loglik(
    divergence: u32,
    observations: *const f64,
    count: usize,
    mean: *const f64,
    cov: *const OptilikSpd,
    rho: f64,
    value_out: *mut f64,
    cov_out: *mut *mut OptilikSpd,
    mean_out: *mut f64,
) -> OptilikStatus {
    guard(|| {
        if !cov_out.is_null() {
            *cov_out = ptr::null_mut();
        }
        let value_out = value_out.as_mut().ok_or_else(|| null("value_out"))?;
        let cov = spd_ref(cov, "cov")?;
        let n = cov.dim();
        let mean = DVector::from_column_slice(slice(mean, n, "mean")?);
        let total = count
            .checked_mul(n)
            .ok_or_else(|| Failure(OptilikStatus::InvalidArgument, "count too large".into()))?;
        let flat = slice(observations, total, "observations")?;
        let obs: Vec<DVector<f64>> = flat
            .chunks_exact(n)
            .map(DVector::from_column_slice)
            .collect();
        match divergence {
            OPTILIK_DIVERGENCE_FR | OPTILIK_DIVERGENCE_KL => {
                let (value, sigma) = if divergence == OPTILIK_DIVERGENCE_FR {
                    optilik::optimistic_loglik_fr(
                        &obs,
                        &mean,
                        cov,
                        rho,
                        &FrSolverOptions::for_classification(),
                    )?
                } else {
                    optilik::optimistic_loglik_kl(&obs, &mean, cov, rho)?
                };
                *value_out = value;
                if !cov_out.is_null() {
                    *cov_out = boxed(sigma);
                }
            }
            OPTILIK_DIVERGENCE_FR_MEAN | OPTILIK_DIVERGENCE_KL_MEAN => {
                let radius = if divergence == OPTILIK_DIVERGENCE_FR_MEAN {
                    MeanRadius::Fr(rho)
                } else {
                    MeanRadius::Kl(rho)
                };
                let (value, mu) = optilik::optimistic_loglik_mean(&obs, &mean, cov, radius)?;
                *value_out = value;
                if !mean_out.is_null() {
                    std::slice::from_raw_parts_mut(mean_out, n).copy_from_slice(mu.as_slice());
                }
            }
            other => {
                return Err(Failure(
                    OptilikStatus::InvalidArgument,
                    format!("unknown divergence {other}"),
                ))
            }
        }
        Ok(())
    })
}
