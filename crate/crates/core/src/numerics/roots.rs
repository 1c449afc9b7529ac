//! Bracketed root finding for non-decreasing functions.

use crate::error::{Error, Result};

const MAX_ITERS: usize = 400;

/// Root of a non-decreasing `f` on `[lo, hi]` with `f(lo) <= 0 <= f(hi)`.
///
/// Alternates a secant (false-position) step with a bisection step, so the
/// bracket at least halves every two evaluations and no differentiability
/// is assumed. Returns once `|f(x)| <= tol` or the bracket is narrower
/// than `tol`.
pub fn find_root_increasing(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) || !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::param(format!("invalid bracket [{lo}, {hi}] or tolerance {tol}")));
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if !(fa <= 0.0 && fb >= 0.0) {
        return Err(Error::param(format!("bracket does not straddle a root: f({lo}) = {fa}, f({hi}) = {fb}")));
    }
    if fa.abs() <= tol {
        return Ok(a);
    }
    if fb.abs() <= tol {
        return Ok(b);
    }
    for iter in 0..MAX_ITERS {
        if b - a <= tol {
            return Ok(0.5 * (a + b));
        }
        let secant = a - fa * (b - a) / (fb - fa);
        let x = if iter % 2 == 0 && secant > a && secant < b { secant } else { 0.5 * (a + b) };
        let fx = f(x);
        if fx.is_nan() {
            return Err(Error::numerical(format!("function is NaN at {x}")));
        }
        if fx.abs() <= tol {
            return Ok(x);
        }
        if fx < 0.0 {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
    }
    Ok(0.5 * (a + b))
}
