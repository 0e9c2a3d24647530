//! Zero-sum consumption game on `dX = α dt + β dB`, absorbed at `X ≤ 0`.
//!
//! Player 1 consumes `ξ` (state drops by `κ₁ + (1+λ₁)ξ`, payoff gains `ξ`) and
//! maximizes; player 2 consumes `η` (state drops by `κ₂ + (1+λ₂)η`, payoff loses
//! `η`) and minimizes. In the continuation region the value is
//! `ψ₀(x) = a(e^{b₁x} − e^{b₂x})`, and the thresholds solve
//!
//! ```text
//! ψ₀′(x_low)   = 1/(1+λ₁)          ψ₀′(x_tilde) = 1/(1+λ₁)
//! m₁(x_tilde)  = x_tilde − (1+λ₁)(ψ₀(x_tilde) − ψ₀(x_low)) − x_low − κ₁ = 0
//! ψ₀′(x_hash)  = 1/(1+λ₂)
//! m₂(x_bar)    = x_hash − x_bar − κ₂ − (1+λ₂)(ψ₀(x_bar) − ψ₀(x_hash)) = 0
//! ```
//!
//! `m₂` is written in value-matching form, i.e. `ψ` continuous at `x_bar`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Direction, ExitRule, ModelSpec, ThresholdPolicy};
use crate::numerics::newton::{damped_newton, max_abs, NewtonOptions};
use crate::qvi::{
    Candidate, CostSign, CostSpec, Derivatives, Domain, ImpulseGrid, ImpulseResponse, Mode, Obstacle,
    ZeroSumObstacles,
};

/// Residual tolerance for accepting a solved system.
pub const ACCEPT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroSumProblem {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub lambda1: f64,
    pub kappa1: f64,
    pub lambda2: f64,
    pub kappa2: f64,
}

impl ZeroSumProblem {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("delta", self.delta),
            ("lambda1", self.lambda1),
            ("kappa1", self.kappa1),
            ("lambda2", self.lambda2),
            ("kappa2", self.kappa2),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::input(name, "must be finite"));
            }
        }
        if self.beta == 0.0 {
            return Err(Error::input("beta", "must be nonzero"));
        }
        if !(self.delta > 0.0) {
            return Err(Error::input("delta", "must be > 0"));
        }
        for (name, k) in [("kappa1", self.kappa1), ("kappa2", self.kappa2)] {
            if !(k > 0.0) {
                return Err(Error::input(
                    name,
                    "must be > 0 (assumption A.3: every intervention carries a positive fixed cost)",
                ));
            }
        }
        for (name, l) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(l >= 0.0) {
                return Err(Error::input(name, "must be ≥ 0"));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> ModelSpec {
        ModelSpec::one_dim(self.alpha, self.beta)
    }

    pub fn exit(&self) -> ExitRule {
        ExitRule::below(0, 0.0)
    }
}

/// Roots `b₁ > 0 > b₂` of `−δ + αb + ½β²b² = 0`.
pub fn solve_exponents(p: &ZeroSumProblem) -> Result<(f64, f64)> {
    if p.beta == 0.0 || !p.beta.is_finite() {
        return Err(Error::input("beta", "must be finite and nonzero"));
    }
    let b2sq = p.beta * p.beta;
    let disc = (p.alpha * p.alpha + 2.0 * b2sq * p.delta).sqrt();
    let b1 = (disc - p.alpha) / b2sq;
    let b2 = -(p.alpha + disc) / b2sq;
    Ok((b1, b2))
}

/// Minimizer of `ψ₀′`: `(2/(b₁−b₂))·ln(|b₂|/b₁)`.
pub fn inflection_point(b1: f64, b2: f64) -> f64 {
    2.0 / (b1 - b2) * (b2.abs() / b1).ln()
}

/// `ψ₀` with its amplitude and exponents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Psi0 {
    pub a: f64,
    pub b1: f64,
    pub b2: f64,
}

impl Psi0 {
    pub fn value(&self, x: f64) -> f64 {
        self.a * ((self.b1 * x).exp() - (self.b2 * x).exp())
    }
    pub fn d1(&self, x: f64) -> f64 {
        self.a * (self.b1 * (self.b1 * x).exp() - self.b2 * (self.b2 * x).exp())
    }
    pub fn d2(&self, x: f64) -> f64 {
        self.a * (self.b1 * self.b1 * (self.b1 * x).exp() - self.b2 * self.b2 * (self.b2 * x).exp())
    }
}

/// Ordering conditions that a threshold solution may violate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroSumSolution {
    pub b1: f64,
    pub b2: f64,
    pub a: f64,
    pub x_low: f64,
    pub x_tilde: f64,
    pub x_hash: f64,
    pub x_bar: f64,
    /// Absolute residuals of the five equations in the module-level order.
    pub residuals: Vec<f64>,
    pub x_inflection: f64,
    /// All residuals within [`ACCEPT_TOL`] and no ordering violation.
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

impl ZeroSumSolution {
    pub fn psi0(&self) -> Psi0 {
        Psi0 {
            a: self.a,
            b1: self.b1,
            b2: self.b2,
        }
    }

    pub fn max_residual(&self) -> f64 {
        max_abs(&self.residuals)
    }

    /// Residuals within tolerance and `0 < x_low < x_tilde`.
    pub fn player1_accepted(&self) -> bool {
        self.max_residual() <= ACCEPT_TOL && 0.0 < self.x_low && self.x_low < self.x_tilde
    }
}

/// The five-equation residual vector at `u = (a, x_low, x_tilde, x_hash, x_bar)`.
pub fn system_residuals(p: &ZeroSumProblem, b1: f64, b2: f64, u: &[f64]) -> [f64; 5] {
    let psi = Psi0 { a: u[0], b1, b2 };
    let (xl, xt, xh, xb) = (u[1], u[2], u[3], u[4]);
    let s1 = 1.0 / (1.0 + p.lambda1);
    let s2 = 1.0 / (1.0 + p.lambda2);
    [
        psi.d1(xl) - s1,
        psi.d1(xt) - s1,
        xt - (1.0 + p.lambda1) * (psi.value(xt) - psi.value(xl)) - xl - p.kappa1,
        psi.d1(xh) - s2,
        xh - xb - p.kappa2 - (1.0 + p.lambda2) * (psi.value(xb) - psi.value(xh)),
    ]
}

/// Solves for `(a, x_low, x_tilde, x_hash, x_bar)`.
///
/// Damped Newton with a finite-difference Jacobian from a grid of starts
/// built around the inflection point of `ψ₀′`; the start with the smallest
/// max-residual wins (ties: lexicographically smallest solution vector).
pub fn solve_free_boundaries(p: &ZeroSumProblem) -> Result<ZeroSumSolution> {
    p.validate()?;
    let (b1, b2) = solve_exponents(p)?;
    if !(p.alpha > 0.0) {
        return Err(Error::Regime(format!(
            "alpha = {} ≤ 0: ψ₀′ has no interior minimum on (0, ∞), so ψ₀′ = (1+λ₁)⁻¹ \
             cannot have two solutions (requires alpha > 0)",
            p.alpha
        )));
    }
    let xi = inflection_point(b1, b2);
    let unit = Psi0 { a: 1.0, b1, b2 };
    let s1 = 1.0 / (1.0 + p.lambda1);
    // Amplitude at which ψ₀′ just touches (1+λ₁)⁻¹ at its minimum.
    let a_touch = s1 / unit.d1(xi);

    let f = |u: &[f64]| -> Option<Vec<f64>> {
        let r = system_residuals(p, b1, b2, u);
        r.iter().all(|v| v.is_finite()).then(|| r.to_vec())
    };
    let admissible = |u: &[f64]| u[0] > 0.0 && u[1..].iter().all(|v| *v > 0.0 && *v < 1e3 * xi.max(1.0));
    let opts = NewtonOptions::default();

    let mut best: Option<(f64, Vec<f64>)> = None;
    for &af in &[1.05, 1.3, 2.0, 4.0] {
        for &ql in &[0.125, 0.25, 0.5, 0.75] {
            for &qt in &[1.5, 2.0, 3.0, 5.0] {
                for &qb in &[0.5, 0.9] {
                    let xl = ql * xi;
                    let u0 = [af * a_touch, xl, qt * xi, xl, qb * xl];
                    let Some(out) = damped_newton(&f, &admissible, &u0, &opts) else { continue };
                    // The two tangency points must sit on opposite sides of the minimum of ψ₀′;
                    // player 2's retarget mirrors x_low and takes the lower tangency.
                    if !(out.x[1] < xi && out.x[2] > xi && out.x[3] < xi) {
                        continue;
                    }
                    let r = out.max_residual();
                    let replace = match &best {
                        None => true,
                        Some((br, bx)) => r < *br || (r == *br && out.x < *bx),
                    };
                    if replace {
                        best = Some((r, out.x.clone()));
                    }
                }
            }
        }
    }
    let Some((_, u)) = best else {
        return Err(Error::NoSolution {
            message: "Newton failed to produce an admissible iterate from every start".into(),
            residuals: vec![],
        });
    };
    let residuals: Vec<f64> = system_residuals(p, b1, b2, &u).iter().map(|v| v.abs()).collect();
    if max_abs(&residuals) > ACCEPT_TOL {
        return Err(Error::NoSolution {
            message: format!(
                "best start leaves residuals above {ACCEPT_TOL:e} (fixed cost too large for an interior band?)"
            ),
            residuals,
        });
    }
    let mut violations = Vec::new();
    if !(0.0 < u[1] && u[1] < u[2]) {
        violations.push(Violation {
            condition: "0 < x_low < x_tilde".into(),
            detail: format!("x_low = {}, x_tilde = {}", u[1], u[2]),
        });
    }
    if !(0.0 < u[3] && u[3] < u[4]) {
        violations.push(Violation {
            condition: "0 < x_hash < x_bar".into(),
            detail: format!(
                "x_hash = {}, x_bar = {}: value matching for player 2 has its only root below x_hash",
                u[3], u[4]
            ),
        });
    }
    Ok(ZeroSumSolution {
        b1,
        b2,
        a: u[0],
        x_low: u[1],
        x_tilde: u[2],
        x_hash: u[3],
        x_bar: u[4],
        residuals,
        x_inflection: xi,
        feasible: violations.is_empty(),
        violations,
    })
}

/// `φ(s, x) = e^{−δs}ψ(x)` on `[0, x_max]`.
#[derive(Debug, Clone)]
pub struct ZeroSumValue {
    pub problem: ZeroSumProblem,
    pub solution: ZeroSumSolution,
    domain: Domain,
}

/// Branch of `ψ` used at a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiBranch {
    Continuation,
    Player2Action,
    Player1Action,
}

impl ZeroSumValue {
    pub fn x_max(&self) -> f64 {
        self.domain.upper[0]
    }

    /// Branch selection in the order: outside player 2's continuation region,
    /// then outside player 1's, else continuation.
    pub fn branch(&self, x: f64) -> PsiBranch {
        let s = &self.solution;
        if x >= s.x_bar {
            PsiBranch::Player2Action
        } else if x >= s.x_tilde {
            PsiBranch::Player1Action
        } else {
            PsiBranch::Continuation
        }
    }

    /// `ψ(x)`; `ψ(0) = 0`.
    pub fn psi(&self, x: f64) -> f64 {
        let s = &self.solution;
        let p = &self.problem;
        let psi0 = s.psi0();
        match self.branch(x) {
            PsiBranch::Continuation => psi0.value(x),
            PsiBranch::Player2Action => psi0.value(s.x_hash) + (s.x_hash - x - p.kappa2) / (1.0 + p.lambda2),
            PsiBranch::Player1Action => psi0.value(s.x_low) + (x - s.x_low - p.kappa1) / (1.0 + p.lambda1),
        }
    }

    fn psi_derivs(&self, x: f64) -> (f64, f64) {
        let s = &self.solution;
        let p = &self.problem;
        match self.branch(x) {
            PsiBranch::Continuation => (s.psi0().d1(x), s.psi0().d2(x)),
            PsiBranch::Player2Action => (-1.0 / (1.0 + p.lambda2), 0.0),
            PsiBranch::Player1Action => (1.0 / (1.0 + p.lambda1), 0.0),
        }
    }
}

impl Candidate for ZeroSumValue {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn value(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.domain.check(x)?;
        Ok((-self.problem.delta * t).exp() * self.psi(x[0]))
    }

    fn analytic_derivatives(&self, t: f64, x: &[f64]) -> Option<Derivatives> {
        let d = (-self.problem.delta * t).exp();
        let (g, h) = self.psi_derivs(x[0]);
        Some(Derivatives {
            time: -self.problem.delta * d * self.psi(x[0]),
            grad: vec![d * g],
            hess: vec![vec![d * h]],
        })
    }
}

/// Builds `φ(s, x) = e^{−δs}ψ(x)` on `[0, x_max]`.
pub fn build_value_function(sol: &ZeroSumSolution, p: &ZeroSumProblem, x_max: f64) -> Result<ZeroSumValue> {
    if sol.max_residual() > ACCEPT_TOL {
        return Err(Error::input("solution", "residuals exceed the acceptance tolerance"));
    }
    if !(x_max > 0.0 && x_max.is_finite()) {
        return Err(Error::input("x_max", "must be finite and > 0"));
    }
    Ok(ZeroSumValue {
        problem: *p,
        solution: sol.clone(),
        domain: Domain {
            lower: vec![0.0],
            upper: vec![x_max],
        },
    })
}

/// Player 1's optimal consumption `ξ̂(x) = (x − x_low − κ₁)/(1+λ₁)` for `x ≥ x_tilde`.
pub fn xi_hat(sol: &ZeroSumSolution, p: &ZeroSumProblem, x: f64) -> Result<f64> {
    if x < sol.x_tilde {
        return Err(Error::Domain(format!(
            "x = {x} lies in player 1's continuation region (below x_tilde = {})",
            sol.x_tilde
        )));
    }
    Ok((x - sol.x_low - p.kappa1) / (1.0 + p.lambda1))
}

/// Player 2's impulse `η̂(x) = (x_hash − x − κ₂)/(1+λ₂)` for `x ≥ x_bar`.
pub fn eta_hat(sol: &ZeroSumSolution, p: &ZeroSumProblem, x: f64) -> Result<f64> {
    if x < sol.x_bar {
        return Err(Error::Domain(format!(
            "x = {x} lies in player 2's continuation region (below x_bar = {})",
            sol.x_bar
        )));
    }
    Ok((sol.x_hash - x - p.kappa2) / (1.0 + p.lambda2))
}

/// Threshold policies for the simulator: player 1 consumes down to `x_low`
/// once `X ≥ x_tilde`; player 2 moves to `x_hash` once `X ≥ x_bar`.
///
/// The consumption amount is encoded by the payoff accounting, not by the
/// policy cost, so `lambda`/`kappa` here carry the player's cost parameters
/// for reference only. Player 2's band is rejected when `x_hash ≥ x_bar`.
pub fn build_policies(sol: &ZeroSumSolution, p: &ZeroSumProblem) -> [Result<ThresholdPolicy>; 2] {
    [
        ThresholdPolicy::new(0, sol.x_tilde, sol.x_low, Direction::Above, p.lambda1, p.kappa1),
        ThresholdPolicy::new(0, sol.x_bar, sol.x_hash, Direction::Above, p.lambda2, p.kappa2),
    ]
}

/// Obstacles of the game in the form the QVI operators expect: player 1 is
/// the sup-type (maximizing) obstacle, player 2 the inf-type one.
pub fn obstacles(p: &ZeroSumProblem, x_max: f64, points: usize) -> ZeroSumObstacles {
    let mk = |player: u8, lambda: f64, kappa: f64, sign: CostSign, mode: Mode| Obstacle {
        player,
        cost: CostSpec {
            lambda,
            kappa,
            coordinate: 0,
            sign,
            response: ImpulseResponse::Consumption,
            discount: p.delta,
        },
        mode,
        grid: ImpulseGrid::new(0.0, x_max / (1.0 + lambda), points),
    };
    ZeroSumObstacles {
        maximizer: mk(1, p.lambda1, p.kappa1, CostSign::Subtracted, Mode::Sup),
        minimizer: mk(2, p.lambda2, p.kappa2, CostSign::Added, Mode::Inf),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ZeroSumProblem {
        ZeroSumProblem {
            alpha: 0.5,
            beta: 1.0,
            delta: 0.5,
            lambda1: 0.1,
            kappa1: 0.1,
            lambda2: 0.1,
            kappa2: 0.1,
        }
    }

    #[test]
    fn exponents_drift_free() {
        let p = ZeroSumProblem { alpha: 0.0, ..base() };
        let (b1, b2) = solve_exponents(&p).unwrap();
        assert!((b1 - 1.0).abs() < 1e-15 && (b2 + 1.0).abs() < 1e-15);
    }

    #[test]
    fn nonpositive_drift_is_regime_error() {
        let p = ZeroSumProblem { alpha: 0.0, ..base() };
        assert!(matches!(solve_free_boundaries(&p), Err(Error::Regime(_))));
    }

    #[test]
    fn zero_fixed_cost_rejected() {
        let p = ZeroSumProblem { kappa1: 0.0, ..base() };
        assert!(matches!(solve_free_boundaries(&p), Err(Error::Input { .. })));
    }
}
