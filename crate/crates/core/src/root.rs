//! Scalar root finding on bracketing intervals.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

/// Newton's method safeguarded by bisection for a function that is strictly
/// decreasing on `[lo, hi]` with `f(lo) >= 0 >= f(hi)`.
///
/// `f` returns the value and the derivative. Newton steps that leave the
/// current bracket, or fail to halve it, are replaced by bisection.
pub fn newton_decreasing<F>(mut f: F, lo: f64, hi: f64, xtol: f64) -> Result<Root>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let (mut a, mut b) = (lo, hi);
    let (fa, _) = f(a)?;
    if fa <= 0.0 {
        return if fa == 0.0 {
            Ok(Root { x: a, fx: 0.0, iterations: 0 })
        } else {
            Err(Error::Bracket(format!("f({a}) = {fa:e} < 0 at left end of [{lo}, {hi}]")))
        };
    }
    let (fb, _) = f(b)?;
    if fb >= 0.0 {
        return if fb == 0.0 {
            Ok(Root { x: b, fx: 0.0, iterations: 0 })
        } else {
            Err(Error::Bracket(format!("f({b}) = {fb:e} > 0 at right end of [{lo}, {hi}]")))
        };
    }

    // rtsafe: Newton while it stays inside the bracket and shrinks the step
    // fast enough, bisection otherwise.
    let mut x = a + fa / (fa - fb) * (b - a);
    let mut dx_old = b - a;
    let mut dx = dx_old;
    for it in 1..=200 {
        let (fx, dfx) = f(x)?;
        if fx == 0.0 {
            return Ok(Root { x, fx, iterations: it });
        }
        if fx > 0.0 {
            a = x;
        } else {
            b = x;
        }
        let newton_ok = dfx < 0.0 && {
            let nx = x - fx / dfx;
            nx > a && nx < b && (2.0 * fx).abs() <= (dx_old * dfx).abs()
        };
        dx_old = dx;
        let next = if newton_ok {
            dx = fx / dfx;
            x - dx
        } else {
            dx = 0.5 * (b - a);
            a + dx
        };
        let step = (next - x).abs();
        x = next;
        if step <= xtol || b - a <= xtol {
            let (fx, _) = f(x)?;
            return Ok(Root { x, fx, iterations: it });
        }
    }
    let (fx, _) = f(x)?;
    Ok(Root { x, fx, iterations: 200 })
}

/// Brent's method on a bracket with `f(a)` and `f(b)` of opposite sign.
///
/// Stops once the bracket is narrower than `xtol` or `|f| <= ftol`.
pub fn brent<F>(mut f: F, a: f64, b: f64, xtol: f64, ftol: f64, max_iter: usize) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    let fa = f(a)?;
    let fb = f(b)?;
    brent_with(&mut f, a, fa, b, fb, xtol, ftol, max_iter)
}

/// Same as [`brent`] when the end-point values are already known.
#[allow(clippy::too_many_arguments)]
pub fn brent_with<F>(
    f: &mut F,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    xtol: f64,
    ftol: f64,
    max_iter: usize,
) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut fa, mut b, mut fb) = (a, fa, b, fb);
    if fa == 0.0 {
        return Ok(Root { x: a, fx: fa, iterations: 0 });
    }
    if fb == 0.0 {
        return Ok(Root { x: b, fx: fb, iterations: 0 });
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracket(format!(
            "no sign change on [{a}, {b}]: f = ({fa:e}, {fb:e})"
        )));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for it in 1..=max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb.abs() <= ftol {
            return Ok(Root { x: b, fx: fb, iterations: it });
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
    }
    Ok(Root { x: b, fx: fb, iterations: max_iter })
}

/// Locates the switch point of a monotone predicate on `[lo, hi]`.
///
/// Requires `pred(lo)` true and `pred(hi)` false; returns `(last_true, first_false)`
/// bracketing the switch to within `xtol`.
pub fn bisect_predicate<P>(mut pred: P, lo: f64, hi: f64, xtol: f64) -> Result<(f64, f64)>
where
    P: FnMut(f64) -> Result<bool>,
{
    let (mut a, mut b) = (lo, hi);
    for _ in 0..2000 {
        if b - a <= xtol {
            break;
        }
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if pred(mid)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newton_finds_decreasing_root() {
        // f(y) = 2 - y^3, root 2^(1/3)
        let r = newton_decreasing(|y| Ok((2.0 - y * y * y, -3.0 * y * y)), 0.0, 2.0, 1e-15).unwrap();
        assert!((r.x - 2f64.cbrt()).abs() < 1e-14, "{r:?}");
    }

    #[test]
    fn newton_endpoint_roots() {
        let r = newton_decreasing(|y| Ok((-y, -1.0)), 0.0, 1.0, 1e-15).unwrap();
        assert_eq!(r.x, 0.0);
        let r = newton_decreasing(|y| Ok((1.0 - y, -1.0)), 0.0, 1.0, 1e-15).unwrap();
        assert_eq!(r.x, 1.0);
    }

    #[test]
    fn newton_rejects_bad_bracket() {
        assert!(matches!(
            newton_decreasing(|y| Ok((y - 5.0, 1.0)), 0.0, 1.0, 1e-12),
            Err(Error::Bracket(_))
        ));
    }

    #[test]
    fn newton_survives_flat_derivative() {
        // derivative vanishes at the root; bisection keeps progress
        let r = newton_decreasing(|y: f64| Ok((-(y - 0.3).powi(3), -3.0 * (y - 0.3).powi(2))), 0.0, 1.0, 1e-14)
            .unwrap();
        assert!((r.x - 0.3).abs() < 1e-4);
    }

    #[test]
    fn brent_matches_known_roots() {
        let r = brent(|x| Ok(x.cos() - x), 0.0, 1.0, 1e-15, 0.0, 100).unwrap();
        assert!((r.x - 0.739_085_133_215_160_6).abs() < 1e-14);
        let r = brent(|x| Ok(x * x * x - 2.0 * x - 5.0), 2.0, 3.0, 1e-15, 0.0, 100).unwrap();
        assert!((r.x - 2.094_551_481_542_326_5).abs() < 1e-13);
        assert!(brent(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-12, 0.0, 100).is_err());
    }

    #[test]
    fn predicate_bisection_brackets_switch() {
        let (a, b) = bisect_predicate(|x| Ok(x < 0.123), 0.0, 1.0, 1e-12).unwrap();
        assert!(a < 0.123 && b >= 0.123 && b - a <= 1e-12);
    }
}
