//! Generator, intervention operators and QVI residuals for candidate value functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Relative width of the band in which an obstacle counts as binding:
/// `|f − 𝓜f| ≤ BINDING_TOL·(1 + |f|)`.
pub const BINDING_TOL: f64 = 1e-6;

/// Axis-aligned box in state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Domain {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "point {x:?} outside [{:?}, {:?}]",
                self.lower, self.upper
            )))
        }
    }
}

/// Time derivative, gradient and Hessian at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    pub time: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<Vec<f64>>,
}

/// A function `(t, x) ↦ f(t, x)` on a box, optionally with analytic derivatives.
pub trait Candidate: Sync {
    fn domain(&self) -> &Domain;

    fn dim(&self) -> usize {
        self.domain().lower.len()
    }

    /// Value at `(t, x)`; errors outside the domain.
    fn value(&self, t: f64, x: &[f64]) -> Result<f64>;

    /// Analytic derivatives, when the candidate supplies them.
    fn analytic_derivatives(&self, _t: f64, _x: &[f64]) -> Option<Derivatives> {
        None
    }
}

/// How derivatives entering the generator were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy)]
pub struct GeneratorOptions {
    /// Use finite differences even when analytic derivatives exist.
    pub force_finite_difference: bool,
    /// Relative central-difference step: `h = fd_step·max(1, |x|)`.
    pub fd_step: f64,
    /// Gauss–Legendre nodes for continuous mark laws; the check doubles this.
    pub quad_nodes: usize,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        GeneratorOptions {
            force_finite_difference: false,
            fd_step: 1e-4,
            quad_nodes: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorValue {
    pub value: f64,
    pub mode: DerivativeMode,
    /// Set when doubling the quadrature nodes moved the jump integral by more than 1e-8 (relative).
    pub quadrature_warning: Option<String>,
}

/// Central finite-difference derivatives; the stencil must lie inside the domain.
pub fn finite_difference_derivatives(f: &dyn Candidate, t: f64, x: &[f64], rel_step: f64) -> Result<Derivatives> {
    let d = x.len();
    let dom = f.domain();
    let h: Vec<f64> = x.iter().map(|v| rel_step * v.abs().max(1.0)).collect();
    for i in 0..d {
        if x[i] - h[i] < dom.lower[i] || x[i] + h[i] > dom.upper[i] {
            return Err(Error::Domain(format!(
                "finite-difference stencil at {x:?} leaves the domain in coordinate {i}"
            )));
        }
    }
    let ht = rel_step * t.abs().max(1.0);
    let f0 = f.value(t, x)?;
    let time = (f.value(t + ht, x)? - f.value(t - ht, x)?) / (2.0 * ht);
    let mut grad = vec![0.0; d];
    let mut hess = vec![vec![0.0; d]; d];
    let mut y = x.to_vec();
    for i in 0..d {
        y[i] = x[i] + h[i];
        let fp = f.value(t, &y)?;
        y[i] = x[i] - h[i];
        let fm = f.value(t, &y)?;
        y[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * h[i]);
        hess[i][i] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let mut eval = |si: f64, sj: f64| {
                y[i] = x[i] + si * h[i];
                y[j] = x[j] + sj * h[j];
                let v = f.value(t, &y);
                y[i] = x[i];
                y[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0)? - eval(1.0, -1.0)? - eval(-1.0, 1.0)? + eval(-1.0, -1.0)?)
                / (4.0 * h[i] * h[j]);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    Ok(Derivatives { time, grad, hess })
}

/// `∂ₜf + Σμᵢ∂ᵢf + ½Σ(σσᵀ)ᵢⱼ∂ᵢⱼf + Σⱼ ωⱼ E[f(x+θⱼz) − f(x) − ∇f·θⱼz]`.
pub fn generator_apply(
    model: &ModelSpec,
    f: &dyn Candidate,
    t: f64,
    x: &[f64],
    opts: &GeneratorOptions,
) -> Result<GeneratorValue> {
    let d = model.dim();
    if x.len() != d || f.dim() != d {
        return Err(Error::input("x", "dimension does not match the model"));
    }
    f.domain().check(x)?;
    let (der, mode) = match (opts.force_finite_difference, f.analytic_derivatives(t, x)) {
        (false, Some(der)) => (der, DerivativeMode::Analytic),
        _ => (
            finite_difference_derivatives(f, t, x, opts.fd_step)?,
            DerivativeMode::FiniteDifference,
        ),
    };
    let a = model.diffusion();
    let mut val = der.time;
    for i in 0..d {
        val += model.drift[i] * der.grad[i];
        for j in 0..d {
            val += 0.5 * a[i][j] * der.hess[i][j];
        }
    }

    let mut warning = None;
    if !model.jumps.is_empty() {
        let f0 = f.value(t, x)?;
        let mut y = x.to_vec();
        for (j, src) in model.jumps.iter().enumerate() {
            if src.intensity == 0.0 {
                continue;
            }
            let mut err = None;
            let mut integrand = |z: f64| -> f64 {
                let mut lin = 0.0;
                for i in 0..d {
                    y[i] = x[i] + src.loading[i] * z;
                    lin += der.grad[i] * src.loading[i] * z;
                }
                match f.value(t, &y) {
                    Ok(v) => v - f0 - lin,
                    Err(e) => {
                        err.get_or_insert(e);
                        f64::NAN
                    }
                }
            };
            let coarse = src.marks.expect(opts.quad_nodes, &mut integrand);
            let fine = if src.marks.is_discrete() {
                coarse
            } else {
                src.marks.expect(2 * opts.quad_nodes, &mut integrand)
            };
            if let Some(e) = err {
                return Err(e);
            }
            if (fine - coarse).abs() > 1e-8 * fine.abs().max(1e-300) && (fine - coarse).abs() > 1e-300 {
                warning = Some(format!(
                    "jump source {j}: quadrature changed by {:.3e} on node doubling",
                    fine - coarse
                ));
            }
            val += src.intensity * fine;
        }
    }
    Ok(GeneratorValue {
        value: val,
        mode,
        quadrature_warning: warning,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `min_z f(x + z) + c(z)`.
    Inf,
    /// `max_z f(x + z) − χ(z)`.
    Sup,
}

/// Whether the intervention cost enters the obstacle with `+` or `−`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostSign {
    Added,
    Subtracted,
}

/// How an impulse of size `z` moves the controlled coordinate and what it costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpulseResponse {
    /// Target `x + z`, cost `λz + κ`.
    Additive,
    /// Consumption of `z`: target `x − κ − (1+λ)z`, cost `−z` (the consumed
    /// amount is paid out rather than charged).
    Consumption,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub lambda: f64,
    pub kappa: f64,
    #[serde(default)]
    pub coordinate: usize,
    pub sign: CostSign,
    pub response: ImpulseResponse,
    /// Costs at time `t` are scaled by `e^{−discount·t}`.
    #[serde(default)]
    pub discount: f64,
}

impl CostSpec {
    pub fn additive(lambda: f64, kappa: f64, coordinate: usize, sign: CostSign, discount: f64) -> Self {
        CostSpec {
            lambda,
            kappa,
            coordinate,
            sign,
            response: ImpulseResponse::Additive,
            discount,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::input(
                "cost.kappa",
                "must be > 0 (assumption A.3: every intervention carries a positive fixed cost)",
            ));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::input("cost.lambda", "must be finite and ≥ 0"));
        }
        Ok(())
    }

    /// Controlled coordinate after an impulse of size `z` from `x`.
    pub fn target(&self, x: f64, z: f64) -> f64 {
        match self.response {
            ImpulseResponse::Additive => x + z,
            ImpulseResponse::Consumption => x - self.kappa - (1.0 + self.lambda) * z,
        }
    }

    /// Undiscounted cost of an impulse of size `z`.
    pub fn raw_cost(&self, z: f64) -> f64 {
        match self.response {
            ImpulseResponse::Additive => self.lambda * z + self.kappa,
            ImpulseResponse::Consumption => -z,
        }
    }

    /// Impulse sizes keeping the target inside `[lo, hi]`.
    fn feasible_sizes(&self, x: f64, lo: f64, hi: f64) -> (f64, f64) {
        match self.response {
            ImpulseResponse::Additive => (lo - x, hi - x),
            ImpulseResponse::Consumption => {
                let s = 1.0 + self.lambda;
                ((x - self.kappa - hi) / s, (x - self.kappa - lo) / s)
            }
        }
    }
}

/// Impulse sizes searched by the intervention operator: a uniform grid of
/// `points` over `[lo, hi]` (after domain clipping), then a second uniform
/// grid of `points` across the two cells around the coarse optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpulseGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl ImpulseGrid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Self {
        ImpulseGrid { lo, hi, points }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterventionValue {
    pub value: f64,
    pub argopt: f64,
}

fn search(
    f: &dyn Candidate,
    t: f64,
    x: &[f64],
    cost: &CostSpec,
    mode: Mode,
    grid: &ImpulseGrid,
) -> Result<Option<InterventionValue>> {
    let c = cost.coordinate;
    if c >= x.len() {
        return Err(Error::input("cost.coordinate", "out of range"));
    }
    let dom = f.domain();
    let (zl, zh) = cost.feasible_sizes(x[c], dom.lower[c], dom.upper[c]);
    let a = grid.lo.max(zl);
    let b = grid.hi.min(zh);
    if !(a <= b) {
        return Ok(None);
    }
    let n = grid.points.max(3);
    let disc = (-cost.discount * t).exp();
    let s = match cost.sign {
        CostSign::Added => 1.0,
        CostSign::Subtracted => -1.0,
    };
    let mut y = x.to_vec();
    let mut eval = |z: f64| -> Result<f64> {
        y[c] = cost.target(x[c], z).clamp(dom.lower[c], dom.upper[c]);
        Ok(f.value(t, &y)? + s * disc * cost.raw_cost(z))
    };
    let better = |v: f64, best: f64| match mode {
        Mode::Inf => v < best,
        Mode::Sup => v > best,
    };
    let scan = |lo: f64, hi: f64, eval: &mut dyn FnMut(f64) -> Result<f64>| -> Result<(f64, f64, usize, f64)> {
        let h = if n > 1 { (hi - lo) / (n as f64 - 1.0) } else { 0.0 };
        let mut best_z = lo;
        let mut best_v = eval(lo)?;
        let mut best_k = 0;
        for k in 1..n {
            let z = if k == n - 1 { hi } else { lo + h * k as f64 };
            let v = eval(z)?;
            if better(v, best_v) {
                best_v = v;
                best_z = z;
                best_k = k;
            }
        }
        Ok((best_z, best_v, best_k, h))
    };
    if a == b {
        let v = eval(a)?;
        return Ok(Some(InterventionValue { value: v, argopt: a }));
    }
    let (z0, v0, k0, h) = scan(a, b, &mut eval)?;
    let lo = if k0 == 0 { a } else { z0 - h };
    let hi = if k0 == n - 1 { b } else { z0 + h };
    let (z1, v1, _, _) = scan(lo.max(a), hi.min(b), &mut eval)?;
    let (value, argopt) = if better(v1, v0) || (v1 == v0 && z1 < z0) {
        (v1, z1)
    } else {
        (v0, z0)
    };
    Ok(Some(InterventionValue { value, argopt }))
}

/// Best immediate impulse: `min_z f(t, Γ(x,z)) + c(t,z)` or `max_z f(t, Γ(x,z)) − χ(t,z)`.
///
/// Ties go to the smallest impulse. Grid points whose target leaves the
/// domain are dropped first; nothing left is a domain error.
pub fn intervention_operator(
    f: &dyn Candidate,
    t: f64,
    x: &[f64],
    cost: &CostSpec,
    mode: Mode,
    grid: &ImpulseGrid,
) -> Result<InterventionValue> {
    search(f, t, x, cost, mode, grid)?
        .ok_or_else(|| Error::Domain(format!("no admissible impulse from {x:?} within [{}, {}]", grid.lo, grid.hi)))
}

/// One player's obstacle: who acts, at what cost, in which direction of optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub player: u8,
    pub cost: CostSpec,
    pub mode: Mode,
    pub grid: ImpulseGrid,
}

impl Obstacle {
    /// `f − 𝓜f` at `(t, x)`. Where no impulse is feasible the obstacle cannot
    /// bind: `+∞` for a sup-type operator, `−∞` for an inf-type one.
    pub fn gap(&self, f: &dyn Candidate, t: f64, x: &[f64]) -> Result<f64> {
        let fx = f.value(t, x)?;
        Ok(match search(f, t, x, &self.cost, self.mode, &self.grid)? {
            Some(m) => fx - m.value,
            None => match self.mode {
                Mode::Sup => f64::INFINITY,
                Mode::Inf => f64::NEG_INFINITY,
            },
        })
    }
}

/// Which clause attains the residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "clause", content = "player")]
pub enum Branch {
    Pde,
    Obstacle(u8),
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Branch::Pde => write!(f, "pde"),
            Branch::Obstacle(p) => write!(f, "obstacle{p}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QviResidual {
    pub residual: f64,
    pub branch: Branch,
    /// `−(𝓛f + running reward)`; the generator includes `∂ₜf`.
    pub pde_term: f64,
    pub mode: DerivativeMode,
    pub quadrature_warning: Option<String>,
}

/// Running reward rate `(t, x) ↦ f(t, x)`.
pub type RunningRate<'a> = &'a (dyn Fn(f64, &[f64]) -> f64 + Sync);

/// Zero-sum obstacles: the maximizer's operator is sup-type with subtracted
/// costs, the minimizer's is inf-type with added costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroSumObstacles {
    pub maximizer: Obstacle,
    pub minimizer: Obstacle,
}

/// `max{ min[ −(𝓛f + run), f − 𝓜_max f ], f − 𝓜_min f }`.
pub fn qvi_residual_zero_sum(
    model: &ModelSpec,
    f: &dyn Candidate,
    run: RunningRate<'_>,
    t: f64,
    x: &[f64],
    obstacles: &ZeroSumObstacles,
    opts: &GeneratorOptions,
) -> Result<QviResidual> {
    let g = generator_apply(model, f, t, x, opts)?;
    let pde = -(g.value + run(t, x));
    let up = obstacles.maximizer.gap(f, t, x)?;
    let down = obstacles.minimizer.gap(f, t, x)?;
    let inner = pde.min(up);
    let (residual, branch) = if down > inner {
        (down, Branch::Obstacle(obstacles.minimizer.player))
    } else if pde <= up {
        (pde, Branch::Pde)
    } else {
        (up, Branch::Obstacle(obstacles.maximizer.player))
    };
    Ok(QviResidual {
        residual,
        branch,
        pde_term: pde,
        mode: g.mode,
        quadrature_warning: g.quadrature_warning,
    })
}

/// Maximizing player's QVI: `min{ −(𝓛f + run), f − 𝓜f }`.
///
/// This is the maximizer clause of the zero-sum operator; it vanishes both in
/// the continuation region (PDE holds, `f > 𝓜f`) and in the action region
/// (`f = 𝓜f`, `𝓛f + run ≤ 0`).
pub fn qvi_residual_nonzero_sum(
    model: &ModelSpec,
    f: &dyn Candidate,
    run: RunningRate<'_>,
    t: f64,
    x: &[f64],
    obstacle: &Obstacle,
    opts: &GeneratorOptions,
) -> Result<QviResidual> {
    let g = generator_apply(model, f, t, x, opts)?;
    let pde = -(g.value + run(t, x));
    let gap = obstacle.gap(f, t, x)?;
    let (residual, branch) = if pde <= gap {
        (pde, Branch::Pde)
    } else {
        (gap, Branch::Obstacle(obstacle.player))
    };
    Ok(QviResidual {
        residual,
        branch,
        pde_term: pde,
        mode: g.mode,
        quadrature_warning: g.quadrature_warning,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionLabel {
    I1,
    I2,
    I3,
}

impl std::fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionClass {
    pub label: RegionLabel,
    /// Both obstacles bind; the label falls back to I1.
    pub ambiguous: bool,
    pub gaps: [f64; 2],
}

/// Binding test `|gap| ≤ tol·(1 + |f|)`.
pub fn binds(gap: f64, value: f64, tol: f64) -> bool {
    gap.is_finite() && gap.abs() <= tol * (1.0 + value.abs())
}

/// I1 where player 1's obstacle binds, I2 where player 2's does, I3 otherwise.
/// `fs[i]` is the function player `i+1`'s obstacle is tested against (the same
/// function twice for a zero-sum game).
pub fn classify_region(
    fs: [&dyn Candidate; 2],
    t: f64,
    x: &[f64],
    obstacles: [&Obstacle; 2],
    tol: f64,
) -> Result<RegionClass> {
    let mut gaps = [0.0; 2];
    let mut bind = [false; 2];
    for i in 0..2 {
        let v = fs[i].value(t, x)?;
        gaps[i] = obstacles[i].gap(fs[i], t, x)?;
        bind[i] = if tol.is_infinite() {
            true
        } else {
            binds(gaps[i], v, tol)
        };
    }
    let label = if bind[0] {
        RegionLabel::I1
    } else if bind[1] {
        RegionLabel::I2
    } else {
        RegionLabel::I3
    };
    Ok(RegionClass {
        label,
        ambiguous: bind[0] && bind[1],
        gaps,
    })
}

/// Closure-backed candidate, handy for tests and ad-hoc checks.
pub struct FnCandidate<F> {
    pub domain: Domain,
    pub f: F,
}

impl<F> Candidate for FnCandidate<F>
where
    F: Fn(f64, &[f64]) -> f64 + Sync,
{
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn value(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.domain.check(x)?;
        Ok((self.f)(t, x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_domain() -> Domain {
        Domain {
            lower: vec![-10.0],
            upper: vec![10.0],
        }
    }

    #[test]
    fn generator_of_linear_function_is_drift() {
        let f = FnCandidate {
            domain: line_domain(),
            f: |_t: f64, x: &[f64]| x[0],
        };
        let m = ModelSpec::one_dim(0.3, 0.7);
        let g = generator_apply(&m, &f, 0.0, &[1.0], &GeneratorOptions::default()).unwrap();
        assert_eq!(g.mode, DerivativeMode::FiniteDifference);
        assert!((g.value - 0.3).abs() < 1e-9);
    }

    #[test]
    fn affine_cost_minimized_at_zero() {
        let f = FnCandidate {
            domain: line_domain(),
            f: |_t: f64, _x: &[f64]| 0.0,
        };
        let cost = CostSpec::additive(0.5, 0.2, 0, CostSign::Added, 0.0);
        let m = intervention_operator(&f, 0.0, &[0.0], &cost, Mode::Inf, &ImpulseGrid::new(0.0, 3.0, 101)).unwrap();
        assert_eq!(m.argopt, 0.0);
        assert!((m.value - 0.2).abs() < 1e-15);
        let cost = CostSpec::additive(0.5, 0.2, 0, CostSign::Subtracted, 0.0);
        let m = intervention_operator(&f, 0.0, &[0.0], &cost, Mode::Sup, &ImpulseGrid::new(0.0, 3.0, 101)).unwrap();
        assert_eq!(m.argopt, 0.0);
        assert!((m.value + 0.2).abs() < 1e-15);
    }

    #[test]
    fn empty_grid_is_domain_error() {
        let f = FnCandidate {
            domain: line_domain(),
            f: |_t: f64, _x: &[f64]| 0.0,
        };
        let cost = CostSpec::additive(0.5, 0.2, 0, CostSign::Added, 0.0);
        let r = intervention_operator(&f, 0.0, &[9.0], &cost, Mode::Inf, &ImpulseGrid::new(2.0, 3.0, 11));
        assert!(matches!(r, Err(Error::Domain(_))));
    }
}
