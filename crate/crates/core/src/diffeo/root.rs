use crate::error::{Error, Result};

/// Absolute residual tolerance of the monotone root finder.
pub const ROOT_TOL: f64 = 1e-12;

const MAX_ITER: usize = 200;

/// Solves `f(t) = target` for an increasing `f` on the bracket `[lo, hi]`,
/// where the caller guarantees `f(lo) ≤ target ≤ f(hi)`.
///
/// `f` returns the value and derivative. Newton steps start from `guess` and
/// fall back to bisection whenever they leave the current bracket. A
/// non-positive derivative means the function is not increasing and is
/// reported as a precondition failure at `level`.
pub fn solve_increasing<F>(mut f: F, target: f64, mut lo: f64, mut hi: f64, guess: f64, tol: f64, level: usize) -> Result<f64>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    if !(lo <= hi) || !target.is_finite() {
        return Err(Error::Argument(format!("invalid bracket [{lo}, {hi}] for target {target}")));
    }
    let mut t = guess.clamp(lo, hi);
    for _ in 0..MAX_ITER {
        let (v, dv) = f(t)?;
        let r = v - target;
        if r.abs() <= tol {
            return Ok(t);
        }
        if !(dv > 0.0) {
            return Err(Error::Precondition {
                level,
                delta: dv,
                threshold: 0.0,
                reason: format!("coordinate map is not increasing at t = {t}"),
            });
        }
        if r < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if hi - lo <= 4.0 * f64::EPSILON * t.abs().max(1.0) {
            return Ok(t);
        }
        let newton = t - r / dv;
        t = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    Err(Error::Numeric(format!("root finder did not converge for target {target}")))
}

/// Like [`solve_increasing`] but finds the bracket by expanding around `guess`.
pub fn solve_increasing_unbracketed<F>(mut f: F, target: f64, guess: f64, tol: f64, level: usize) -> Result<f64>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let mut step = 1.0;
    let (mut lo, mut hi) = (guess - step, guess + step);
    for _ in 0..60 {
        let below = f(lo)?.0 <= target;
        let above = f(hi)?.0 >= target;
        if below && above {
            return solve_increasing(f, target, lo, hi, guess, tol, level);
        }
        step *= 2.0;
        if !below {
            lo = guess - step;
        }
        if !above {
            hi = guess + step;
        }
    }
    Err(Error::Numeric(format!("could not bracket target {target}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cubic_root() {
        let t = solve_increasing(|t| Ok((t * t * t + t, 3.0 * t * t + 1.0)), 10.0, -5.0, 5.0, 0.0, ROOT_TOL, 0).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
    }

    #[test]
    fn decreasing_function_is_rejected() {
        let r = solve_increasing(|t| Ok((-t, -1.0)), 0.5, -1.0, 1.0, 0.0, ROOT_TOL, 3);
        assert!(matches!(r, Err(Error::Precondition { level: 3, .. })));
    }

    #[test]
    fn unbracketed_expands() {
        let t = solve_increasing_unbracketed(|t| Ok((t.exp(), t.exp())), 1e6, 0.0, 1e-6, 0).unwrap();
        assert!((t - 1e6f64.ln()).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn inverse_consistency(a in 0.05f64..0.9, b in -3.0f64..3.0, y in -4.0f64..4.0) {
            // t + a sin(t + b) is increasing for a < 1
            let f = |t: f64| Ok((t + a * (t + b).sin(), 1.0 + a * (t + b).cos()));
            let t = solve_increasing(f, y, y - 2.0, y + 2.0, y, ROOT_TOL, 0).unwrap();
            prop_assert!((t + a * (t + b).sin() - y).abs() <= 1e-10);
        }
    }
}
