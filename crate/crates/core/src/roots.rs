//! Bracketing root finder for monotone scalar functions.
//!
//! Every solver in the crate reduces to "find the zero of a monotone function
//! on a known bracket": the congestion fixed point, the uniform price
//! condition and the per-program best responses. Bisection is used throughout
//! because the functions involved can have flat pieces (densities that vanish
//! outside the support) and infinite values (inverse hazard below the
//! support), both of which break derivative based methods.

use crate::error::{Error, Result};

/// Result of a bracketed search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    /// Function value at `x`.
    pub residual: f64,
    pub iterations: usize,
}

/// Stopping rule for [`bisect_increasing`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stop {
    /// Accept `x` once `|f(x)| <= f_tol`.
    pub f_tol: f64,
    /// Accept once the bracket is no wider than this. Zero means "run until
    /// the bracket cannot be split in floating point".
    pub x_tol: f64,
    pub max_iter: usize,
}

impl Stop {
    pub fn residual(f_tol: f64, max_iter: usize) -> Self {
        Self { f_tol, x_tol: 0.0, max_iter }
    }

    pub fn width(x_tol: f64, max_iter: usize) -> Self {
        Self { f_tol: 0.0, x_tol, max_iter }
    }
}

/// Bisection for a nondecreasing `f` on `[lo, hi]`.
///
/// Endpoints whose value is already within `f_tol` of zero are returned as
/// is. When the bracket is exhausted the endpoint with the smaller residual is
/// returned; the caller decides whether that residual is acceptable.
pub fn bisect_increasing<F>(what: &'static str, mut f: F, lo: f64, hi: f64, stop: Stop) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    debug_assert!(lo <= hi, "bracket [{lo}, {hi}] is reversed");
    let mut eval = |x: f64| -> Result<f64> {
        let v = f(x)?;
        if v.is_nan() {
            Err(Error::NotANumber { what, x })
        } else {
            Ok(v)
        }
    };

    let (mut lo, mut hi) = (lo, hi);
    let mut f_lo = eval(lo)?;
    if f_lo.abs() <= stop.f_tol {
        return Ok(Root { x: lo, residual: f_lo, iterations: 0 });
    }
    let mut f_hi = eval(hi)?;
    if f_hi.abs() <= stop.f_tol {
        return Ok(Root { x: hi, residual: f_hi, iterations: 0 });
    }
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::NoSignChange { what, lo, hi, f_lo, f_hi });
    }

    let mut iterations = 0;
    while iterations < stop.max_iter && hi - lo > stop.x_tol {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        let f_mid = eval(mid)?;
        if f_mid.abs() <= stop.f_tol {
            return Ok(Root { x: mid, residual: f_mid, iterations });
        }
        if f_mid < 0.0 {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }

    Ok(if f_lo.abs() <= f_hi.abs() {
        Root { x: lo, residual: f_lo, iterations }
    } else {
        Root { x: hi, residual: f_hi, iterations }
    })
}

/// Bisection for a nonincreasing `f`; the reported residual is `f(x)` itself.
pub fn bisect_decreasing<F>(what: &'static str, mut f: F, lo: f64, hi: f64, stop: Stop) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    let root = bisect_increasing(what, |x| f(x).map(|v| -v), lo, hi, stop).map_err(|e| match e {
        Error::NoSignChange { what, lo, hi, f_lo, f_hi } => {
            Error::NoSignChange { what, lo, hi, f_lo: -f_lo, f_hi: -f_hi }
        }
        other => other,
    })?;
    Ok(Root { residual: -root.residual, ..root })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let root = bisect_increasing("x^2-2", |x| Ok(x * x - 2.0), 0.0, 2.0, Stop::residual(1e-15, 200)).unwrap();
        assert!((root.x - std::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn endpoint_roots_return_immediately() {
        let root = bisect_increasing("id", Ok, 0.0, 1.0, Stop::residual(0.0, 10)).unwrap();
        assert_eq!(root.x, 0.0);
        assert_eq!(root.iterations, 0);
    }

    #[test]
    fn rejects_bracket_without_sign_change() {
        let err = bisect_increasing("x+1", |x| Ok(x + 1.0), 0.0, 1.0, Stop::residual(1e-12, 100)).unwrap_err();
        assert!(matches!(err, Error::NoSignChange { .. }));
    }

    #[test]
    fn handles_infinite_values() {
        // -inf on the left part of the bracket, as the uniform price condition
        // produces below the valuation support.
        let f = |x: f64| Ok(if x < 0.3 { f64::NEG_INFINITY } else { x - 0.5 });
        let root = bisect_increasing("step", f, 0.0, 1.0, Stop::residual(1e-14, 200)).unwrap();
        assert!((root.x - 0.5).abs() < 1e-14);
    }

    #[test]
    fn decreasing_reports_signed_residual() {
        let root = bisect_decreasing("1-x", |x| Ok(1.0 - x), 0.0, 3.0, Stop::width(0.0, 200)).unwrap();
        assert!((root.x - 1.0).abs() < 1e-15);
        assert!(root.residual.abs() < 1e-15);
    }

    #[test]
    fn nan_is_reported() {
        let err = bisect_increasing("nan", |_| Ok(f64::NAN), 0.0, 1.0, Stop::residual(0.0, 10)).unwrap_err();
        assert!(matches!(err, Error::NotANumber { .. }));
    }
}
