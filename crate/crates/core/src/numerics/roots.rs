//! Scalar root finding: Brent's method and outward bracket expansion.

use crate::error::{Error, Result};

/// Brent's method on a bracketing interval `[a, b]` with `f(a)·f(b) ≤ 0`.
///
/// Stops when the bracket is narrower than `xtol + 4·ε·|x|` or an exact zero
/// is hit. At most `max_iter` iterations.
pub fn brent<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    xtol: f64,
    max_iter: usize,
) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if !(fa.is_finite() && fb.is_finite()) {
        return Err(Error::Bracketing(format!(
            "non-finite function value at bracket ends [{a}, {b}]"
        )));
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracketing(format!(
            "no sign change on [{a}, {b}] (f = {fa:e}, {fb:e})"
        )));
    }

    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
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
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
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
                e = d;
            }
        } else {
            d = m;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
        if !fb.is_finite() {
            return Err(Error::Bracketing(format!("non-finite function value at {b}")));
        }
    }
    Ok(b)
}

/// Expands `[a, a + step]` geometrically away from `a` until `f` changes sign.
///
/// `step` may be negative to search leftwards. Fails once `|step|` exceeds `bound`.
pub fn expand_bracket<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    mut step: f64,
    bound: f64,
) -> Result<(f64, f64)> {
    let fa = f(a);
    let mut prev = a;
    loop {
        let x = a + step;
        let fx = f(x);
        if !fx.is_finite() {
            return Err(Error::Bracketing(format!(
                "function became non-finite at {x} while expanding from {a}"
            )));
        }
        if fx.signum() != fa.signum() || fx == 0.0 {
            return Ok(if step > 0.0 { (prev, x) } else { (x, prev) });
        }
        if step.abs() > bound {
            return Err(Error::Bracketing(format!(
                "no sign change within |step| ≤ {bound} from {a}"
            )));
        }
        prev = x;
        step *= 2.0;
    }
}
