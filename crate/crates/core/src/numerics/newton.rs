//! Damped Newton iteration for small square nonlinear systems.
//!
//! Steps solve `J·δ = −r` through an SVD pseudo-inverse, so a rank-deficient
//! Jacobian yields the minimum-norm step instead of a failure. Each step is
//! halved (up to `max_halvings` times) until the residual norm decreases and
//! the iterate stays admissible.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Convergence threshold on the max-norm of the residual vector.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Relative central-difference step for the Jacobian.
    pub fd_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-13,
            max_iter: 100,
            max_halvings: 30,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl NewtonOutcome {
    pub fn max_residual(&self) -> f64 {
        max_abs(&self.residuals)
    }
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, r| m.max(r.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|r| r * r).sum::<f64>().sqrt()
}

/// Central-difference Jacobian of `f` at `x`. Returns `None` when a stencil
/// point leaves the domain of `f`.
pub fn fd_jacobian<F>(f: &F, x: &[f64], rel_step: f64) -> Option<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = x.len();
    let m = f(x)?.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = rel_step * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let fp = f(&xp)?;
        xp[j] = x[j] - h;
        let fm = f(&xp)?;
        xp[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Some(jac)
}

/// Minimum-norm least-squares solution of `A·δ = b`.
pub fn min_norm_solve(a: &DMatrix<f64>, b: &[f64]) -> Option<Vec<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax.is_finite()) || smax == 0.0 {
        return None;
    }
    let rhs = DVector::from_column_slice(b);
    let sol = svd.solve(&rhs, smax * 1e-12).ok()?;
    let out: Vec<f64> = sol.iter().copied().collect();
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Ratio of the smallest to the largest singular value.
pub fn condition_ratio(a: &DMatrix<f64>) -> f64 {
    let s = a.clone().singular_values();
    let smax = s.max();
    if smax == 0.0 {
        0.0
    } else {
        s.min() / smax
    }
}

/// Runs the damped iteration from `x0`.
///
/// `f` returns `None` outside its domain; `admissible` rejects iterates that
/// violate structural constraints (ordering, positivity) before `f` is called.
pub fn damped_newton<F, A>(f: &F, admissible: &A, x0: &[f64], opts: &NewtonOptions) -> Option<NewtonOutcome>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
    A: Fn(&[f64]) -> bool,
{
    if !admissible(x0) {
        return None;
    }
    let mut x = x0.to_vec();
    let mut r = f(&x)?;
    let mut it = 0;
    while it < opts.max_iter {
        if max_abs(&r) <= opts.tol {
            break;
        }
        it += 1;
        let Some(jac) = fd_jacobian(f, &x, opts.fd_step) else { break };
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let Some(step) = min_norm_solve(&jac, &neg) else { break };

        let base = norm2(&r);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(xi, si)| xi + scale * si).collect();
            if admissible(&trial) {
                if let Some(rt) = f(&trial) {
                    if rt.iter().all(|v| v.is_finite()) && norm2(&rt) < base {
                        accepted = Some((trial, rt));
                        break;
                    }
                }
            }
            scale *= 0.5;
        }
        match accepted {
            Some((xn, rn)) => {
                x = xn;
                r = rn;
            }
            None => break,
        }
    }
    let converged = max_abs(&r) <= opts.tol;
    Some(NewtonOutcome {
        x,
        residuals: r,
        iterations: it,
        converged,
    })
}
