//! Bracketing root finders for monotone scalar functions.

use crate::error::{AuditError, Result};

const MAX_ITER: usize = 500;

/// Bisection on `[lo, hi]`.
///
/// `f(lo)` and `f(hi)` must have opposite signs (or one of them be zero).
/// Stops when the bracket width falls below `rel_tol * max(|lo|, |hi|)`
/// or `abs_tol`, whichever is larger.
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, rel_tol: f64, abs_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(AuditError::RootNotFound(format!(
            "invalid bracket [{lo}, {hi}]"
        )));
    }
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(AuditError::RootNotFound(format!(
            "no sign change on [{lo}, {hi}]: f = ({f_lo}, {f_hi})"
        )));
    }
    for _ in 0..MAX_ITER {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        let tol = (rel_tol * lo.abs().max(hi.abs())).max(abs_tol);
        if hi - lo <= tol {
            break;
        }
    }
    Ok(lo + 0.5 * (hi - lo))
}

/// Newton iteration kept inside a sign-change bracket; falls back to a
/// bisection step whenever the Newton step leaves the bracket.
pub fn safeguarded_newton<F, D>(
    mut f: F,
    mut df: D,
    mut lo: f64,
    mut hi: f64,
    start: f64,
    rel_tol: f64,
) -> Result<f64>
where
    F: FnMut(f64) -> f64,
    D: FnMut(f64) -> f64,
{
    let f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(AuditError::RootNotFound(format!(
            "no sign change on [{lo}, {hi}]"
        )));
    }
    let lo_sign = f_lo.signum();
    let mut x = if start > lo && start < hi {
        start
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..MAX_ITER {
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == lo_sign {
            lo = x;
        } else {
            hi = x;
        }
        let slope = df(x);
        let mut next = x - fx / slope;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= rel_tol * x.abs().max(f64::MIN_POSITIVE)
            || hi - lo <= rel_tol * hi.abs()
        {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}
