//! Adaptive Simpson quadrature.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;
const MAX_EVALS: usize = 20_000_000;

struct Panel {
    a: f64,
    m: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
}

/// Integrates `f` over `[lo, hi]` to absolute tolerance `tol`.
///
/// Returns `Error::QuadratureBudget` when the recursion depth or evaluation
/// budget runs out before the local error estimates meet the tolerance, or
/// when the integrand produces a non-finite value.
pub fn adaptive_simpson<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(tol > 0.0) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "quadrature on [{lo}, {hi}] with tolerance {tol}"
        )));
    }
    if lo == hi {
        return Ok(0.0);
    }
    if hi < lo {
        return adaptive_simpson(f, hi, lo, tol).map(|v| -v);
    }
    let fail = || Error::QuadratureBudget { lo, hi, tolerance: tol };
    let m = 0.5 * (lo + hi);
    let (fa, fm, fb) = (f(lo), f(m), f(hi));
    if !(fa.is_finite() && fm.is_finite() && fb.is_finite()) {
        return Err(fail());
    }
    let whole = (hi - lo) * (fa + 4.0 * fm + fb) / 6.0;
    let mut evals = 3usize;
    let mut total = 0.0;
    // explicit stack instead of recursion; entries carry their own tolerance
    let mut stack = vec![(
        Panel { a: lo, m, b: hi, fa, fm, fb, whole },
        tol,
        0u32,
    )];
    while let Some((p, eps, depth)) = stack.pop() {
        let lm = 0.5 * (p.a + p.m);
        let rm = 0.5 * (p.m + p.b);
        let (flm, frm) = (f(lm), f(rm));
        evals += 2;
        if !(flm.is_finite() && frm.is_finite()) || evals > MAX_EVALS {
            return Err(fail());
        }
        let left = (p.m - p.a) * (p.fa + 4.0 * flm + p.fm) / 6.0;
        let right = (p.b - p.m) * (p.fm + 4.0 * frm + p.fb) / 6.0;
        let delta = left + right - p.whole;
        if delta.abs() <= 15.0 * eps {
            total += left + right + delta / 15.0;
            continue;
        }
        if depth >= MAX_DEPTH {
            return Err(fail());
        }
        stack.push((
            Panel { a: p.m, m: rm, b: p.b, fa: p.fm, fm: frm, fb: p.fb, whole: right },
            0.5 * eps,
            depth + 1,
        ));
        stack.push((
            Panel { a: p.a, m: lm, b: p.m, fa: p.fa, fm: flm, fb: p.fm, whole: left },
            0.5 * eps,
            depth + 1,
        ));
    }
    Ok(total)
}

/// Integrates over consecutive breakpoints, splitting the tolerance evenly.
pub fn adaptive_simpson_pieces<F>(f: F, breaks: &[f64], tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if breaks.len() < 2 {
        return Ok(0.0);
    }
    let share = tol / (breaks.len() - 1) as f64;
    breaks
        .windows(2)
        .try_fold(0.0, |acc, w| Ok(acc + adaptive_simpson(&f, w[0], w[1], share)?))
}

const GL_ORDER: usize = 20;

fn gl_rule() -> &'static [(f64, f64)] {
    static RULE: std::sync::OnceLock<Vec<(f64, f64)>> = std::sync::OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut rule = Vec::with_capacity(n);
        for k in 0..n {
            // Newton on P_n from the Chebyshev-like initial guess
            let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for j in 2..=n {
                    let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-17 {
                    break;
                }
            }
            rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
        }
        rule
    })
}

/// Fixed 20-point Gauss-Legendre rule on `[lo, hi]`. Smooth in the
/// endpoints, unlike adaptive schemes.
pub fn gauss_legendre<F>(f: F, lo: f64, hi: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    gl_rule().iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = adaptive_simpson(|x| 3.0 * x * x - 2.0 * x + 1.0, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 6.0).abs() < 1e-12);
    }

    #[test]
    fn exponential() {
        let v = adaptive_simpson(f64::exp, 0.0, 1.0, 1e-12).unwrap();
        assert!((v - (std::f64::consts::E - 1.0)).abs() < 1e-11);
    }

    #[test]
    fn reversed_and_empty() {
        let v = adaptive_simpson(|x| x, 1.0, 0.0, 1e-10).unwrap();
        assert!((v + 0.5).abs() < 1e-12);
        assert_eq!(adaptive_simpson(|x| x, 1.0, 1.0, 1e-10).unwrap(), 0.0);
    }

    #[test]
    fn non_finite_integrand_fails() {
        let r = adaptive_simpson(|x| 1.0 / x, 0.0, 1.0, 1e-8);
        assert!(matches!(r, Err(Error::QuadratureBudget { .. })));
    }

    #[test]
    fn gauss_legendre_rule() {
        let w: f64 = gl_rule().iter().map(|p| p.1).sum();
        assert!((w - 2.0).abs() < 1e-14);
        let v = gauss_legendre(|x| x.powi(39), 0.0, 1.0);
        assert!((v - 1.0 / 40.0).abs() < 1e-15);
        assert!((gauss_legendre(f64::exp, 0.0, 1.0) - (std::f64::consts::E - 1.0)).abs() < 4e-15);
    }

    #[test]
    fn pieces_handle_kinks() {
        let v = adaptive_simpson_pieces(|x: f64| x.abs(), &[-1.0, 0.0, 2.0], 1e-12).unwrap();
        assert!((v - 2.5).abs() < 1e-12);
    }
}
