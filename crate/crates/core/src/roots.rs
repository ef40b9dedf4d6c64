//! Safeguarded scalar root finding.

use crate::error::{LmmgError, Result};

/// Finds `lo < hi` with `g(lo) > 0 > g(hi)` for a function that is positive
/// near zero and negative far out, by doubling (or halving) from `start`.
pub fn bracket_sign_change<G>(mut g: G, start: f64, limit: f64) -> Result<(f64, f64)>
where
    G: FnMut(f64) -> f64,
{
    let g0 = g(start);
    if !g0.is_finite() {
        return Err(LmmgError::PeakSelection(format!("non-finite derivative at t = {start}")));
    }
    if g0 == 0.0 {
        return Ok((start, start));
    }
    if g0 > 0.0 {
        let mut lo = start;
        let mut t = 2.0 * start;
        while t <= limit {
            let v = g(t);
            if v < 0.0 {
                return Ok((lo, t));
            }
            if v == 0.0 {
                return Ok((t, t));
            }
            lo = t;
            t *= 2.0;
        }
        Err(LmmgError::PeakSelection(format!("no sign change of g' up to t = {limit:e}")))
    } else {
        let mut hi = start;
        let mut t = 0.5 * start;
        while t >= 1.0 / limit {
            let v = g(t);
            if v > 0.0 {
                return Ok((t, hi));
            }
            if v == 0.0 {
                return Ok((t, t));
            }
            hi = t;
            t *= 0.5;
        }
        Err(LmmgError::PeakSelection(format!("g' stays negative down to t = {:e}", 1.0 / limit)))
    }
}

/// Newton's method kept inside the bracket `[lo, hi]`; steps leaving it are
/// replaced by bisection. `g` returns value and derivative; the endpoints
/// must have opposite signs (or coincide at a root).
pub fn newton_bisect<G, C>(
    mut g: G,
    mut lo: f64,
    mut hi: f64,
    start: f64,
    converged: C,
    max_iter: usize,
) -> Result<f64>
where
    G: FnMut(f64) -> (f64, f64),
    C: Fn(f64, f64) -> bool,
{
    if lo == hi {
        return Ok(lo);
    }
    let lo_sign = g(lo).0.signum();
    let mut t = if start > lo && start < hi { start } else { 0.5 * (lo + hi) };
    for _ in 0..max_iter {
        let (v, dv) = g(t);
        if converged(t, v) {
            return Ok(t);
        }
        if v.signum() == lo_sign {
            lo = t;
        } else {
            hi = t;
        }
        if hi - lo <= 4.0 * f64::EPSILON * t.abs() {
            return Ok(t);
        }
        let newton = t - v / dv;
        t = if dv != 0.0 && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(LmmgError::PeakSelection(format!(
        "root search did not converge in {max_iter} iterations (bracket [{lo}, {hi}])"
    )))
}
