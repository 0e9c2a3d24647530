//! Advertising duopoly: each firm raises its own market share by impulses
//! and earns `αᵢ·(own share) − βᵢ·(rival share)` per unit time, discounted at `ε`.
//!
//! In the continuation region firm `i`'s value is
//!
//! ```text
//! φᵢ = e^{−εt}{ C₁(e^{r₁x₁} + e^{r₁x₂}) + C₂(e^{r₂x₁} + e^{r₂x₂}) + (αᵢ/ε)xᵢ − (βᵢ/ε)xⱼ + Kᵢ },
//! Kᵢ = (μᵢαᵢ − μⱼβᵢ)/ε²,
//! ```
//!
//! with `r₁ < 0 < r₂` the roots of coordinate-specific characteristic functions
//! `q(r) = ½σ²r² + μr − ε + Σⱼ ωⱼ E[e^{rθz} − 1 − θrz]`. Firm `i` intervenes when
//! `xᵢ ≤ xᵢ*`, moving to `x̂ᵢ`; smooth fit at both levels and value matching
//! give three equations per firm for the shared `(C₁, C₂)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Direction, JumpSource, MarkLaw, ModelSpec, ThresholdPolicy};
use crate::numerics::newton::{condition_ratio, damped_newton, fd_jacobian, max_abs, min_norm_solve, NewtonOptions};
use crate::numerics::roots::{brent, expand_bracket};
use nalgebra::DMatrix;
use crate::qvi::{Candidate, CostSign, CostSpec, Derivatives, Domain, ImpulseGrid, Mode, Obstacle};

pub const ACCEPT_TOL: f64 = 1e-8;

/// Bound on `|r|` when bracketing characteristic roots.
pub const ROOT_BRACKET_BOUND: f64 = 1e4;

/// Gauss–Legendre nodes for the jump term of `q(r)`.
pub const ROOT_QUAD_NODES: usize = 64;

fn default_anchor() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirmParams {
    pub mu: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub kappa: f64,
    /// Weight of the terminal `γ·S₁²S₂²` reward; simulation only.
    #[serde(default)]
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuopolyProblem {
    pub firms: [FirmParams; 2],
    pub epsilon: f64,
    #[serde(default)]
    pub sigma12: f64,
    #[serde(default)]
    pub sigma21: f64,
    /// Jump sources with two-entry loadings `(θ₁ⱼ, θ₂ⱼ)`.
    #[serde(default)]
    pub jumps: Vec<JumpSource>,
    /// Peak of firm 1's marginal-value gap in the initial guess. The system is
    /// translation invariant when both coordinates share roots, so this picks
    /// the member of the solution family.
    #[serde(default = "default_anchor")]
    pub anchor: f64,
}

impl DuopolyProblem {
    pub fn symmetric(firm: FirmParams, epsilon: f64) -> Self {
        DuopolyProblem {
            firms: [firm, firm],
            epsilon,
            sigma12: 0.0,
            sigma21: 0.0,
            jumps: Vec::new(),
            anchor: default_anchor(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::input("epsilon", "must be finite and > 0"));
        }
        for (i, f) in self.firms.iter().enumerate() {
            let name = |s: &str| format!("firms[{i}].{s}");
            for (n, v) in [
                ("mu", f.mu),
                ("sigma", f.sigma),
                ("alpha", f.alpha),
                ("beta", f.beta),
                ("lambda", f.lambda),
                ("kappa", f.kappa),
                ("gamma", f.gamma),
            ] {
                if !v.is_finite() {
                    return Err(Error::input(name(n), "must be finite"));
                }
            }
            if !(f.kappa > 0.0) {
                return Err(Error::input(
                    name("kappa"),
                    "must be > 0 (assumption A.3: every intervention carries a positive fixed cost)",
                ));
            }
            if !(f.lambda >= 0.0) {
                return Err(Error::input(name("lambda"), "must be ≥ 0"));
            }
            if f.sigma == 0.0 && self.coordinate_jumps(i).is_empty() {
                return Err(Error::input(name("sigma"), "must be nonzero when the coordinate has no jumps"));
            }
        }
        if !self.anchor.is_finite() {
            return Err(Error::input("anchor", "must be finite"));
        }
        self.model().validate()
    }

    pub fn model(&self) -> ModelSpec {
        ModelSpec {
            drift: vec![self.firms[0].mu, self.firms[1].mu],
            volatility: vec![
                vec![self.firms[0].sigma, self.sigma12],
                vec![self.sigma21, self.firms[1].sigma],
            ],
            jumps: self.jumps.clone(),
        }
    }

    /// Jump terms seen by coordinate `i`.
    pub fn coordinate_jumps(&self, i: usize) -> Vec<JumpTerm> {
        self.jumps
            .iter()
            .filter(|s| s.intensity > 0.0 && s.loading.get(i).copied().unwrap_or(0.0) != 0.0)
            .map(|s| JumpTerm {
                intensity: s.intensity,
                marks: s.marks.clone(),
                theta: s.loading[i],
            })
            .collect()
    }
}

/// A jump source restricted to one coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpTerm {
    pub intensity: f64,
    pub marks: MarkLaw,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootMethod {
    ClosedForm,
    Brent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootPair {
    pub r1: f64,
    pub r2: f64,
    /// `|q(r₁)|`, `|q(r₂)|`.
    pub q_residuals: [f64; 2],
    /// Whether `|r₁| > r₂`; reported, not enforced.
    pub negative_root_dominates: bool,
    pub method: RootMethod,
}

/// `q(r) = ½σ²r² + μr − ε + Σ ω E[e^{rθz} − 1 − θrz]`.
pub fn q_value(mu: f64, sigma: f64, eps: f64, jumps: &[JumpTerm], r: f64) -> f64 {
    let mut q = 0.5 * sigma * sigma * r * r + mu * r - eps;
    for j in jumps {
        let th = j.theta;
        q += j.intensity
            * j.marks.expect(ROOT_QUAD_NODES, |z| {
                let u = r * th * z;
                // expm1 keeps e^u − 1 − u accurate for small u.
                u.exp_m1() - u
            });
    }
    q
}

/// Closed-form roots of `½σ²r² + μr − ε`.
pub fn closed_form_roots(mu: f64, sigma: f64, eps: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    let d = (mu * mu + 2.0 * s2 * eps).sqrt();
    (-(mu + d) / s2, (d - mu) / s2)
}

/// Roots by bracketing outward from `q(0) = −ε` and Brent refinement.
pub fn numeric_roots(mu: f64, sigma: f64, eps: f64, jumps: &[JumpTerm]) -> Result<(f64, f64)> {
    let q = |r: f64| q_value(mu, sigma, eps, jumps, r);
    let scale = {
        let s2 = sigma * sigma;
        let j2: f64 = jumps.iter().map(|j| j.intensity * j.theta * j.theta * j.marks.second_moment()).sum();
        let c = s2 + j2;
        if c > 0.0 {
            (eps / c).sqrt().max(1e-6)
        } else {
            1.0
        }
    };
    let guard = |e: Error| match e {
        Error::Bracketing(m) if m.contains("non-finite") => Error::Regime(format!(
            "jump integral diverges while bracketing characteristic roots ({m}); mark laws: {:?}",
            jumps.iter().map(|j| &j.marks).collect::<Vec<_>>()
        )),
        other => other,
    };
    let (a, b) = expand_bracket(q, 0.0, 0.5 * scale, ROOT_BRACKET_BOUND).map_err(guard)?;
    let r2 = brent(q, a, b, 1e-15, 500)?;
    let (a, b) = expand_bracket(q, 0.0, -0.5 * scale, ROOT_BRACKET_BOUND).map_err(guard)?;
    let r1 = brent(q, a, b, 1e-15, 500)?;
    Ok((r1, r2))
}

/// Characteristic roots for one coordinate: closed form without jumps,
/// bracketing plus Brent otherwise.
pub fn roots_for(mu: f64, sigma: f64, eps: f64, jumps: &[JumpTerm]) -> Result<RootPair> {
    if !(eps > 0.0) {
        return Err(Error::input("epsilon", "must be > 0"));
    }
    let (r1, r2, method) = if jumps.is_empty() {
        if sigma == 0.0 {
            return Err(Error::input("sigma", "must be nonzero without jumps"));
        }
        let (a, b) = closed_form_roots(mu, sigma, eps);
        (a, b, RootMethod::ClosedForm)
    } else {
        let (a, b) = numeric_roots(mu, sigma, eps, jumps)?;
        (a, b, RootMethod::Brent)
    };
    Ok(RootPair {
        r1,
        r2,
        q_residuals: [
            q_value(mu, sigma, eps, jumps, r1).abs(),
            q_value(mu, sigma, eps, jumps, r2).abs(),
        ],
        negative_root_dominates: r1.abs() > r2,
        method,
    })
}

/// Per-coordinate roots `[firm 1, firm 2]`.
pub fn characteristic_roots(p: &DuopolyProblem) -> Result<[RootPair; 2]> {
    let r = |i: usize| roots_for(p.firms[i].mu, p.firms[i].sigma, p.epsilon, &p.coordinate_jumps(i));
    Ok([r(0)?, r(1)?])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuopolySolution {
    /// Negative root per coordinate.
    pub r1: [f64; 2],
    /// Positive root per coordinate.
    pub r2: [f64; 2],
    pub roots: [RootPair; 2],
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    pub x_star: [f64; 2],
    pub x_hat: [f64; 2],
    /// Constants `Kᵢ` of the particular solution.
    pub constants: [f64; 2],
    /// Absolute residuals, firm 1's three equations then firm 2's.
    pub residuals: Vec<f64>,
    pub warnings: Vec<String>,
}

impl DuopolySolution {
    pub fn max_residual(&self) -> f64 {
        max_abs(&self.residuals)
    }
}

/// The six equations at `u = (C₁, C₂, x₁*, x̂₁, x₂*, x̂₂)`.
pub fn system_residuals(p: &DuopolyProblem, roots: &[RootPair; 2], u: &[f64]) -> [f64; 6] {
    let (c1, c2) = (u[0], u[1]);
    let mut out = [0.0; 6];
    for i in 0..2 {
        let f = &p.firms[i];
        let (r1, r2) = (roots[i].r1, roots[i].r2);
        let (xs, xh) = (u[2 + 2 * i], u[3 + 2 * i]);
        let slope = f.alpha / p.epsilon;
        let d1 = |x: f64| c1 * r1 * (r1 * x).exp() + c2 * r2 * (r2 * x).exp() + slope - f.lambda;
        out[3 * i] = d1(xs);
        out[3 * i + 1] = d1(xh);
        out[3 * i + 2] = c1 * ((r1 * xs).exp() - (r1 * xh).exp()) + c2 * ((r2 * xs).exp() - (r2 * xh).exp()) + f.kappa
            - (f.lambda - slope) * (xs - xh);
    }
    out
}

/// Single-firm band with the peak of the marginal-value gap at `peak`.
///
/// The gap `g(x) = (α/ε − λ) − A e^{r₁x} − B e^{r₂x}` (A, B > 0) must be
/// positive exactly between the trigger and the retarget and integrate to `κ`
/// there. Fixing the peak location leaves one scale, found by Brent.
/// Returns `(C₁, C₂, x*, x̂)`.
pub fn single_firm_band(r1: f64, r2: f64, alpha: f64, lambda: f64, kappa: f64, eps: f64, peak: f64) -> Result<(f64, f64, f64, f64)> {
    let d = alpha / eps - lambda;
    if !(d > 0.0) {
        return Err(Error::Regime(format!(
            "alpha/epsilon = {} ≤ lambda = {lambda}: a unit of share never repays its proportional cost, \
             so no interior band exists",
            alpha / eps
        )));
    }
    let w1 = r2;
    let w2 = -r1;
    let tmax = d / (w1 + w2);
    let gap = move |y: f64, t: f64| d - t * (w1 * (r1 * y).exp() + w2 * (r2 * y).exp());
    let zeros = move |t: f64| -> Result<(f64, f64)> {
        let g = |y: f64| gap(y, t);
        let (a, b) = expand_bracket(g, 0.0, -0.1 / w2.max(w1), 1e6)?;
        let lo = brent(g, a, b, 1e-15, 500)?;
        let (a, b) = expand_bracket(g, 0.0, 0.1 / w2.max(w1), 1e6)?;
        let hi = brent(g, a, b, 1e-15, 500)?;
        Ok((lo, hi))
    };
    let area = move |t: f64| -> Result<f64> {
        let (lo, hi) = zeros(t)?;
        Ok(d * (hi - lo) - t * (w1 * ((r1 * hi).exp() - (r1 * lo).exp()) / r1 + w2 * ((r2 * hi).exp() - (r2 * lo).exp()) / r2))
    };
    // Area decreases from +∞ (t → 0) to 0 (t → tmax); search in log t.
    let h = |s: f64| area(s.exp()).map(|a| a - kappa).unwrap_or(f64::NAN);
    let hi_s = (tmax * (1.0 - 1e-9)).ln();
    let mut lo_s = hi_s - 1.0;
    while h(lo_s) <= 0.0 {
        lo_s -= 10.0;
        if lo_s < hi_s - 600.0 {
            return Err(Error::Bracketing("band area never reaches kappa".into()));
        }
    }
    let s = brent(h, lo_s, hi_s, 1e-14, 500)?;
    let t = s.exp();
    let (lo, hi) = zeros(t)?;
    let a_coef = t * w1 * (-r1 * peak).exp();
    let b_coef = t * w2 * (-r2 * peak).exp();
    Ok((-a_coef / r1, -b_coef / r2, peak + lo, peak + hi))
}

/// Solves the six-equation system.
///
/// Initial thresholds come from each firm's single-firm band (peaks at
/// `anchor`), initial `(C₁, C₂)` from a least-squares fit of the four
/// derivative conditions at those thresholds; damped Newton with
/// minimum-norm steps takes it from there.
pub fn solve_equilibrium(p: &DuopolyProblem) -> Result<DuopolySolution> {
    p.validate()?;
    if p.sigma12 != 0.0 || p.sigma21 != 0.0 {
        return Err(Error::input(
            "sigma12/sigma21",
            "cross volatilities must be 0 for the analytic solution (simulation supports them)",
        ));
    }
    let roots = characteristic_roots(p)?;
    let mut warnings = Vec::new();
    if (roots[0].r1 - roots[1].r1).abs() > 1e-12 || (roots[0].r2 - roots[1].r2).abs() > 1e-12 {
        warnings.push(format!(
            "asymmetric dynamics: coordinate roots differ ({:?} vs {:?}); the separable value uses \
             coordinate-specific exponents",
            (roots[0].r1, roots[0].r2),
            (roots[1].r1, roots[1].r2)
        ));
    }
    let mut seeds = Vec::new();
    for i in 0..2 {
        let f = &p.firms[i];
        seeds.push(single_firm_band(roots[i].r1, roots[i].r2, f.alpha, f.lambda, f.kappa, p.epsilon, p.anchor)?);
    }
    let xs = [seeds[0].2, seeds[0].3, seeds[1].2, seeds[1].3];
    // Least squares for (C₁, C₂) on the derivative conditions at the seeds.
    let mut a = DMatrix::zeros(4, 2);
    let mut rhs = vec![0.0; 4];
    for i in 0..2 {
        let f = &p.firms[i];
        for k in 0..2 {
            let x = xs[2 * i + k];
            let row = 2 * i + k;
            a[(row, 0)] = roots[i].r1 * (roots[i].r1 * x).exp();
            a[(row, 1)] = roots[i].r2 * (roots[i].r2 * x).exp();
            rhs[row] = f.lambda - f.alpha / p.epsilon;
        }
    }
    let c = min_norm_solve(&a, &rhs).unwrap_or(vec![seeds[0].0, seeds[0].1]);
    let u0 = vec![c[0], c[1], xs[0], xs[1], xs[2], xs[3]];

    let f = |u: &[f64]| -> Option<Vec<f64>> {
        let r = system_residuals(p, &roots, u);
        r.iter().all(|v| v.is_finite()).then(|| r.to_vec())
    };
    let admissible = |u: &[f64]| u[3] > u[2] && u[5] > u[4];
    let opts = NewtonOptions::default();
    let out = damped_newton(&f, &admissible, &u0, &opts).ok_or_else(|| Error::NoSolution {
        message: "initial guess not admissible".into(),
        residuals: vec![],
    })?;
    let u = out.x.clone();
    let residuals: Vec<f64> = system_residuals(p, &roots, &u).iter().map(|v| v.abs()).collect();
    if max_abs(&residuals) > ACCEPT_TOL {
        return Err(Error::NoSolution {
            message: "six-equation system did not close; with shared (C1, C2) asymmetric firms \
                      generally admit no exact solution"
                .into(),
            residuals,
        });
    }
    for i in 0..2 {
        let (xs, xh) = (u[2 + 2 * i], u[3 + 2 * i]);
        if !(xh - xs > 1e-10 * xs.abs().max(1.0)) {
            return Err(Error::Regime(format!(
                "firm {}: retarget {xh} collapsed onto trigger {xs} (fixed cost too small relative to curvature)",
                i + 1
            )));
        }
    }
    if let Some(j) = fd_jacobian(&f, &u, 1e-6) {
        let ratio = condition_ratio(&j);
        if ratio < 1e-8 {
            warnings.push(format!(
                "rank-deficient Jacobian (singular-value ratio {ratio:.1e}): the system is translation \
                 invariant and the solution is the family member selected by anchor = {}",
                p.anchor
            ));
        }
    }
    let eps2 = p.epsilon * p.epsilon;
    let constants = [
        (p.firms[0].mu * p.firms[0].alpha - p.firms[1].mu * p.firms[0].beta) / eps2,
        (p.firms[1].mu * p.firms[1].alpha - p.firms[0].mu * p.firms[1].beta) / eps2,
    ];
    Ok(DuopolySolution {
        r1: [roots[0].r1, roots[1].r1],
        r2: [roots[0].r2, roots[1].r2],
        roots,
        c1: u[0],
        c2: u[1],
        x_star: [u[2], u[4]],
        x_hat: [u[3], u[5]],
        constants,
        residuals,
        warnings,
    })
}

/// Firm `i`'s value `φᵢ(t, x₁, x₂)`, with the intervention branch for `xᵢ < xᵢ*`.
#[derive(Debug, Clone)]
pub struct FirmValue {
    pub firm: usize,
    pub problem: DuopolyProblem,
    pub solution: DuopolySolution,
    domain: Domain,
}

impl FirmValue {
    fn continuation(&self, x: &[f64]) -> f64 {
        let s = &self.solution;
        let i = self.firm;
        let j = 1 - i;
        let f = &self.problem.firms[i];
        let eps = self.problem.epsilon;
        let mut v = s.constants[i] + f.alpha / eps * x[i] - f.beta / eps * x[j];
        for k in 0..2 {
            v += s.c1 * (s.roots[k].r1 * x[k]).exp() + s.c2 * (s.roots[k].r2 * x[k]).exp();
        }
        v
    }

    /// Time-free part `Ψᵢ(x)`.
    pub fn psi(&self, x: &[f64]) -> f64 {
        let i = self.firm;
        let s = &self.solution;
        if x[i] < s.x_star[i] {
            let f = &self.problem.firms[i];
            let mut y = [x[0], x[1]];
            y[i] = s.x_hat[i];
            self.continuation(&y) - f.kappa - f.lambda * (s.x_hat[i] - x[i])
        } else {
            self.continuation(x)
        }
    }

    fn psi_derivatives(&self, x: &[f64]) -> ([f64; 2], [f64; 2]) {
        let i = self.firm;
        let j = 1 - i;
        let s = &self.solution;
        let f = &self.problem.firms[i];
        let eps = self.problem.epsilon;
        let exp_d = |k: usize, xk: f64| {
            let (r1, r2) = (s.roots[k].r1, s.roots[k].r2);
            (
                s.c1 * r1 * (r1 * xk).exp() + s.c2 * r2 * (r2 * xk).exp(),
                s.c1 * r1 * r1 * (r1 * xk).exp() + s.c2 * r2 * r2 * (r2 * xk).exp(),
            )
        };
        let mut g = [0.0; 2];
        let mut h = [0.0; 2];
        let (gj, hj) = exp_d(j, x[j]);
        g[j] = gj - f.beta / eps;
        h[j] = hj;
        if x[i] < s.x_star[i] {
            g[i] = f.lambda;
            h[i] = 0.0;
        } else {
            let (gi, hi) = exp_d(i, x[i]);
            g[i] = gi + f.alpha / eps;
            h[i] = hi;
        }
        (g, h)
    }
}

impl Candidate for FirmValue {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn value(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.domain.check(x)?;
        Ok((-self.problem.epsilon * t).exp() * self.psi(x))
    }

    fn analytic_derivatives(&self, t: f64, x: &[f64]) -> Option<Derivatives> {
        let d = (-self.problem.epsilon * t).exp();
        let (g, h) = self.psi_derivatives(x);
        Some(Derivatives {
            time: -self.problem.epsilon * d * self.psi(x),
            grad: vec![d * g[0], d * g[1]],
            hess: vec![vec![d * h[0], 0.0], vec![0.0, d * h[1]]],
        })
    }
}

/// Default evaluation box: each band padded by twice the widest band plus one.
pub fn default_domain(sol: &DuopolySolution) -> Domain {
    let w = (0..2).map(|i| sol.x_hat[i] - sol.x_star[i]).fold(0.0, f64::max);
    let pad = 2.0 * w + 1.0;
    let lo = sol.x_star[0].min(sol.x_star[1]) - pad;
    let hi = sol.x_hat[0].max(sol.x_hat[1]) + pad;
    Domain {
        lower: vec![lo, lo],
        upper: vec![hi, hi],
    }
}

pub fn build_firm_values(sol: &DuopolySolution, p: &DuopolyProblem) -> Result<[FirmValue; 2]> {
    build_firm_values_on(sol, p, default_domain(sol))
}

pub fn build_firm_values_on(sol: &DuopolySolution, p: &DuopolyProblem, domain: Domain) -> Result<[FirmValue; 2]> {
    if sol.max_residual() > ACCEPT_TOL {
        return Err(Error::input("solution", "residuals exceed the acceptance tolerance"));
    }
    let mk = |firm| FirmValue {
        firm,
        problem: p.clone(),
        solution: sol.clone(),
        domain: domain.clone(),
    };
    Ok([mk(0), mk(1)])
}

/// Firm `i` intervenes when its share drops to `xᵢ*`, restoring `x̂ᵢ`.
pub fn build_policies(sol: &DuopolySolution, p: &DuopolyProblem) -> Result<[ThresholdPolicy; 2]> {
    let mk = |i: usize| {
        ThresholdPolicy::new(i, sol.x_star[i], sol.x_hat[i], Direction::Below, p.firms[i].lambda, p.firms[i].kappa)
    };
    Ok([mk(0)?, mk(1)?])
}

/// Firm `i`'s obstacle: sup over upward impulses with discounted subtracted cost.
pub fn obstacle(p: &DuopolyProblem, firm: usize, domain: &Domain, points: usize) -> Obstacle {
    let f = &p.firms[firm];
    Obstacle {
        player: firm as u8 + 1,
        cost: CostSpec::additive(f.lambda, f.kappa, firm, CostSign::Subtracted, p.epsilon),
        mode: Mode::Sup,
        grid: ImpulseGrid::new(0.0, domain.upper[firm] - domain.lower[firm], points),
    }
}

/// Running reward of firm `i`: `αᵢxᵢ − βᵢxⱼ`.
pub fn running_reward(p: &DuopolyProblem, firm: usize) -> impl Fn(f64, &[f64]) -> f64 + Sync + '_ {
    move |_t, x| p.firms[firm].alpha * x[firm] - p.firms[firm].beta * x[1 - firm]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_unit_case() {
        let (r1, r2) = closed_form_roots(0.0, 1.0, 0.5);
        assert!((r1 + 1.0).abs() < 1e-15 && (r2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_firm_band_closes_its_equations() {
        let (r1, r2) = closed_form_roots(0.1, 0.3, 1.0);
        let (c1, c2, xs, xh) = single_firm_band(r1, r2, 1.5, 1.0, 0.05, 1.0, 1.0).unwrap();
        let h = |x: f64| c1 * (r1 * x).exp() + c2 * (r2 * x).exp() + 1.5 * x;
        let dh = |x: f64| c1 * r1 * (r1 * x).exp() + c2 * r2 * (r2 * x).exp() + 1.5;
        assert!((dh(xs) - 1.0).abs() < 1e-12);
        assert!((dh(xh) - 1.0).abs() < 1e-12);
        assert!((h(xs) - (h(xh) - 0.05 - (xh - xs))).abs() < 1e-12);
        assert!(c1 > 0.0 && c2 < 0.0 && xh > xs);
    }

    #[test]
    fn unprofitable_share_is_regime_error() {
        let (r1, r2) = closed_form_roots(0.1, 0.3, 1.0);
        assert!(matches!(
            single_firm_band(r1, r2, 0.5, 1.0, 0.05, 1.0, 1.0),
            Err(Error::Regime(_))
        ));
    }
}
