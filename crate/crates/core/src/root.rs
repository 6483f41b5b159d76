//! Scalar bracketed root finding (Illinois variant of regula falsi).

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError {
    #[error("no sign change over [{lo}, {hi}] (f = {f_lo:e}, {f_hi:e})")]
    NoBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("function not finite at x = {0}")]
    NotFinite(f64),
    #[error("no convergence after {0} iterations")]
    MaxIterations(usize),
}

/// Returns `x` in `[lo, hi]` with `|f(x)| <= tol`.
pub fn find_bracketed<F>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Result<f64, RootError>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a);
    if !fa.is_finite() {
        return Err(RootError::NotFinite(a));
    }
    if fa.abs() <= tol {
        return Ok(a);
    }
    let mut fb = f(b);
    if !fb.is_finite() {
        return Err(RootError::NotFinite(b));
    }
    if fb.abs() <= tol {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(RootError::NoBracket {
            lo,
            hi,
            f_lo: fa,
            f_hi: fb,
        });
    }
    let mut side = 0i8;
    for _ in 0..max_iter {
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !c.is_finite() || c <= a.min(b) || c >= a.max(b) {
            c = 0.5 * (a + b);
        }
        let fc = f(c);
        if !fc.is_finite() {
            return Err(RootError::NotFinite(c));
        }
        if fc.abs() <= tol || (b - a).abs() <= f64::EPSILON * c.abs().max(1.0) {
            return Ok(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Err(RootError::MaxIterations(max_iter))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt2() {
        let x = find_bracketed(|x| x * x - 2.0, 0.0, 2.0, 1e-14, 100).unwrap();
        assert!((x - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn reports_missing_bracket() {
        assert!(matches!(
            find_bracketed(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 50),
            Err(RootError::NoBracket { .. })
        ));
    }

    #[test]
    fn decreasing_function() {
        let x = find_bracketed(|x| 1.0 - x.powi(3), 0.0, 4.0, 1e-13, 200).unwrap();
        assert!((x - 1.0).abs() < 1e-12);
    }
}
