//! Safeguarded Newton iteration for increasing scalar functions.

use crate::error::{Error, Result};

pub(crate) struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Searches for a sign change of an increasing `f` starting at `x0 > 0`,
/// doubling while `f < 0` and halving while `f > 0`.
///
/// Returns `(lo, hi)` with `f(lo) ≤ 0 ≤ f(hi)`. When halving is exhausted
/// the lower end is reported as `0`, which callers treat as a boundary root.
pub(crate) fn bracket(
    mut f: impl FnMut(f64) -> f64,
    x0: f64,
    max_steps: usize,
) -> Result<(f64, f64)> {
    let v0 = f(x0);
    if v0.is_nan() {
        return Err(Error::BracketFailure { steps: 0 });
    }
    if v0 < 0.0 {
        let mut lo = x0;
        for _ in 0..max_steps {
            let hi = lo * 2.0;
            let v = f(hi);
            if v >= 0.0 {
                return Ok((lo, hi));
            }
            lo = hi;
        }
    } else {
        let mut hi = x0;
        for _ in 0..max_steps {
            let lo = hi * 0.5;
            let v = f(lo);
            if v <= 0.0 {
                return Ok((lo, hi));
            }
            hi = lo;
        }
        return Ok((0.0, hi));
    }
    Err(Error::BracketFailure { steps: max_steps })
}

/// Newton's method on `f` inside `[lo, hi]`, where `fd` returns `(f, f')`.
///
/// A Newton step leaving the bracket (or a non-positive derivative) is
/// replaced by bisection, geometric when the bracket spans orders of magnitude.
pub(crate) fn safeguarded_newton(
    mut fd: impl FnMut(f64) -> (f64, f64),
    mut lo: f64,
    mut hi: f64,
    abs_tol: f64,
    rel_width: f64,
    max_iter: usize,
) -> Root {
    let bisect = |lo: f64, hi: f64| {
        if lo > 0.0 && hi / lo > 4.0 {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        }
    };
    let mut x = bisect(lo, hi);
    let mut best = (x, f64::INFINITY);
    for it in 1..=max_iter {
        let (v, d) = fd(x);
        if v.abs() < best.1 {
            best = (x, v.abs());
        }
        if v.abs() <= abs_tol {
            return Root {
                x,
                residual: v.abs(),
                iterations: it,
            };
        }
        if v < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= rel_width * x {
            break;
        }
        let newton = x - v / d;
        x = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            bisect(lo, hi)
        };
    }
    Root {
        x: best.0,
        residual: best.1,
        iterations: max_iter,
    }
}
