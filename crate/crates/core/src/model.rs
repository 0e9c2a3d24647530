//! State-process description shared by the simulator, the operators and the solvers.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::numerics::quadrature::GaussLegendre;

/// Half-width, in standard deviations, of the support kept for an untruncated
/// normal mark law. Mass discarded on both tails together is below 1e-10.
pub const NORMAL_TAIL_CUT: f64 = 6.5;

/// Distribution of the jump mark `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum MarkLaw {
    Constant { value: f64 },
    /// `high` with probability `p_high`, otherwise `low`.
    TwoPoint { low: f64, high: f64, p_high: f64 },
    /// Normal(mean, sd²) conditioned on `[lower, upper]`; a missing bound is
    /// replaced by `mean ∓ NORMAL_TAIL_CUT·sd` in quadrature.
    TruncatedNormal {
        mean: f64,
        sd: f64,
        #[serde(default)]
        lower: Option<f64>,
        #[serde(default)]
        upper: Option<f64>,
    },
}

impl MarkLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MarkLaw::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::input("marks.value", "must be finite"));
                }
            }
            MarkLaw::TwoPoint { low, high, p_high } => {
                if !(low.is_finite() && high.is_finite()) {
                    return Err(Error::input("marks.low/high", "must be finite"));
                }
                if !(0.0..=1.0).contains(&p_high) {
                    return Err(Error::input("marks.p_high", "must lie in [0, 1]"));
                }
            }
            MarkLaw::TruncatedNormal { mean, sd, lower, upper } => {
                if !mean.is_finite() {
                    return Err(Error::input("marks.mean", "must be finite"));
                }
                if !(sd.is_finite() && sd > 0.0) {
                    return Err(Error::input("marks.sd", "must be finite and > 0"));
                }
                let (lo, hi) = self.support();
                if !(lo < hi) {
                    return Err(Error::input("marks.lower/upper", "lower must be below upper"));
                }
                if let (Some(l), Some(u)) = (lower, upper) {
                    if !(l.is_finite() && u.is_finite()) {
                        return Err(Error::input("marks.lower/upper", "must be finite when given"));
                    }
                }
                if self.truncated_mass() <= 1e-300 {
                    return Err(Error::input("marks.lower/upper", "interval carries no probability mass"));
                }
            }
        }
        Ok(())
    }

    /// Support used for quadrature (exact for the discrete laws).
    pub fn support(&self) -> (f64, f64) {
        match *self {
            MarkLaw::Constant { value } => (value, value),
            MarkLaw::TwoPoint { low, high, .. } => (low.min(high), low.max(high)),
            MarkLaw::TruncatedNormal { mean, sd, lower, upper } => (
                lower.unwrap_or(mean - NORMAL_TAIL_CUT * sd),
                upper.unwrap_or(mean + NORMAL_TAIL_CUT * sd),
            ),
        }
    }

    fn standard_bounds(&self) -> (f64, f64) {
        match *self {
            MarkLaw::TruncatedNormal { mean, sd, lower, upper } => (
                lower.map_or(f64::NEG_INFINITY, |l| (l - mean) / sd),
                upper.map_or(f64::INFINITY, |u| (u - mean) / sd),
            ),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn truncated_mass(&self) -> f64 {
        let n = std_normal();
        let (a, b) = self.standard_bounds();
        n.cdf(b) - n.cdf(a)
    }

    /// Closed-form mean of the mark.
    pub fn mean(&self) -> f64 {
        match *self {
            MarkLaw::Constant { value } => value,
            MarkLaw::TwoPoint { low, high, p_high } => p_high * high + (1.0 - p_high) * low,
            MarkLaw::TruncatedNormal { mean, sd, .. } => {
                let n = std_normal();
                let (a, b) = self.standard_bounds();
                let pa = if a.is_finite() { n.pdf(a) } else { 0.0 };
                let pb = if b.is_finite() { n.pdf(b) } else { 0.0 };
                mean + sd * (pa - pb) / self.truncated_mass()
            }
        }
    }

    /// Closed-form second moment of the mark.
    pub fn second_moment(&self) -> f64 {
        match *self {
            MarkLaw::Constant { value } => value * value,
            MarkLaw::TwoPoint { low, high, p_high } => p_high * high * high + (1.0 - p_high) * low * low,
            MarkLaw::TruncatedNormal { mean, sd, .. } => {
                let n = std_normal();
                let (a, b) = self.standard_bounds();
                let z = self.truncated_mass();
                let (pa, apa) = if a.is_finite() { (n.pdf(a), a * n.pdf(a)) } else { (0.0, 0.0) };
                let (pb, bpb) = if b.is_finite() { (n.pdf(b), b * n.pdf(b)) } else { (0.0, 0.0) };
                let m1 = (pa - pb) / z;
                let var_std = 1.0 + (apa - bpb) / z;
                // E[(mean + sd·Y)²] with Y the standardized truncated variable.
                mean * mean + 2.0 * mean * sd * m1 + sd * sd * var_std
            }
        }
    }

    /// `E[g(Z)]`, exact for the discrete laws and by `nodes`-point
    /// Gauss–Legendre quadrature for the truncated normal.
    pub fn expect<G: FnMut(f64) -> f64>(&self, nodes: usize, mut g: G) -> f64 {
        match *self {
            MarkLaw::Constant { value } => g(value),
            MarkLaw::TwoPoint { low, high, p_high } => p_high * g(high) + (1.0 - p_high) * g(low),
            MarkLaw::TruncatedNormal { mean, sd, .. } => {
                let (lo, hi) = self.support();
                let rule = GaussLegendre::new(nodes);
                let dens = |z: f64| {
                    let u = (z - mean) / sd;
                    (-0.5 * u * u).exp()
                };
                // Normalizing by the same rule's mass cancels most of its error.
                let mass = rule.integrate(lo, hi, dens);
                rule.integrate(lo, hi, |z| g(z) * dens(z)) / mass
            }
        }
    }

    /// True when `expect` is exact regardless of the node count.
    pub fn is_discrete(&self) -> bool {
        !matches!(self, MarkLaw::TruncatedNormal { .. })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            MarkLaw::Constant { value } => value,
            MarkLaw::TwoPoint { low, high, p_high } => {
                if rng.gen::<f64>() < p_high {
                    high
                } else {
                    low
                }
            }
            MarkLaw::TruncatedNormal { mean, sd, .. } => {
                let n = std_normal();
                let (a, b) = self.standard_bounds();
                let (ca, cb) = (n.cdf(a), n.cdf(b));
                let u: f64 = rng.gen();
                let p = (ca + u * (cb - ca)).clamp(1e-300, 1.0 - 1e-16);
                (mean + sd * n.inverse_cdf(p)).clamp(
                    if a.is_finite() { mean + sd * a } else { f64::NEG_INFINITY },
                    if b.is_finite() { mean + sd * b } else { f64::INFINITY },
                )
            }
        }
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal parameters are valid")
}

/// One compound-Poisson jump source: events at rate `intensity`, marks from
/// `marks`, coordinate `i` moved by `loading[i]·z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpSource {
    pub intensity: f64,
    pub marks: MarkLaw,
    pub loading: Vec<f64>,
}

/// Arithmetic jump-diffusion `dX = μ dt + σ dB + ∫θz Ñ(dt, dz)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub drift: Vec<f64>,
    /// `dim × n_brownian` matrix, row-major.
    pub volatility: Vec<Vec<f64>>,
    #[serde(default)]
    pub jumps: Vec<JumpSource>,
}

impl ModelSpec {
    pub fn one_dim(drift: f64, vol: f64) -> Self {
        ModelSpec {
            drift: vec![drift],
            volatility: vec![vec![vol]],
            jumps: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    pub fn n_brownian(&self) -> usize {
        self.volatility.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if !(1..=2).contains(&d) {
            return Err(Error::input("model.drift", "dimension must be 1 or 2"));
        }
        if self.drift.iter().any(|m| !m.is_finite()) {
            return Err(Error::input("model.drift", "entries must be finite"));
        }
        if self.volatility.len() != d {
            return Err(Error::input("model.volatility", format!("needs {d} rows")));
        }
        let m = self.n_brownian();
        if m == 0 {
            return Err(Error::input("model.volatility", "needs at least one column"));
        }
        for row in &self.volatility {
            if row.len() != m {
                return Err(Error::input("model.volatility", "rows must have equal length"));
            }
            if row.iter().any(|s| !s.is_finite()) {
                return Err(Error::input("model.volatility", "entries must be finite"));
            }
        }
        for (j, src) in self.jumps.iter().enumerate() {
            if !(src.intensity.is_finite() && src.intensity >= 0.0) {
                return Err(Error::input(format!("model.jumps[{j}].intensity"), "must be finite and ≥ 0"));
            }
            if src.loading.len() != d {
                return Err(Error::input(format!("model.jumps[{j}].loading"), format!("needs {d} entries")));
            }
            if src.loading.iter().any(|t| !t.is_finite()) {
                return Err(Error::input(format!("model.jumps[{j}].loading"), "entries must be finite"));
            }
            src.marks.validate()?;
            if !(src.marks.mean().is_finite() && src.marks.second_moment().is_finite()) {
                return Err(Error::input(
                    format!("model.jumps[{j}].marks"),
                    "first and second moments must be finite",
                ));
            }
        }
        Ok(())
    }

    /// Diffusion matrix `σσᵀ`.
    pub fn diffusion(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut a = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                a[i][j] = self.volatility[i]
                    .iter()
                    .zip(&self.volatility[j])
                    .map(|(x, y)| x * y)
                    .sum();
            }
        }
        a
    }
}

/// Which side of the trigger activates a policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Intervene when `x ≤ trigger`; requires `retarget > trigger`.
    Below,
    /// Intervene when `x ≥ trigger`; requires `retarget < trigger`.
    Above,
}

/// Band policy: when the controlled coordinate crosses `trigger`, move it to `retarget`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    #[serde(default)]
    pub coordinate: usize,
    pub trigger: f64,
    pub retarget: f64,
    pub direction: Direction,
    pub lambda: f64,
    pub kappa: f64,
}

impl ThresholdPolicy {
    /// Checked constructor; see [`ThresholdPolicy::validate`].
    pub fn new(
        coordinate: usize,
        trigger: f64,
        retarget: f64,
        direction: Direction,
        lambda: f64,
        kappa: f64,
    ) -> Result<Self> {
        let p = ThresholdPolicy {
            coordinate,
            trigger,
            retarget,
            direction,
            lambda,
            kappa,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.trigger.is_finite() && self.retarget.is_finite()) {
            return Err(Error::input("policy.trigger/retarget", "must be finite"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::input("policy.lambda", "must be finite and ≥ 0"));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::input(
                "policy.kappa",
                "must be > 0 (assumption A.3: every intervention carries a positive fixed cost)",
            ));
        }
        let ok = match self.direction {
            Direction::Below => self.retarget > self.trigger,
            Direction::Above => self.retarget < self.trigger,
        };
        if !ok {
            return Err(Error::Regime(format!(
                "degenerate band: retarget {} must lie strictly {} trigger {} for a {:?} policy",
                self.retarget,
                if self.direction == Direction::Below { "above" } else { "below" },
                self.trigger,
                self.direction
            )));
        }
        Ok(())
    }

    pub fn triggered(&self, x: f64) -> bool {
        match self.direction {
            Direction::Below => x <= self.trigger,
            Direction::Above => x >= self.trigger,
        }
    }

    /// Intervention cost `λ·z + κ`.
    pub fn cost(&self, z: f64) -> f64 {
        intervention_cost(self.lambda, self.kappa, z)
    }
}

/// Fixed-plus-proportional cost `λ·z + κ` of an impulse of size `z`.
#[inline]
pub fn intervention_cost(lambda: f64, kappa: f64, z: f64) -> f64 {
    lambda * z + kappa
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Holds when `x ≤ level`.
    Below,
    /// Holds when `x ≥ level`.
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitCondition {
    pub coordinate: usize,
    pub level: f64,
    pub side: Side,
}

/// The game ends the first grid time any condition holds. No conditions means
/// the path runs to the horizon.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExitRule {
    pub conditions: Vec<ExitCondition>,
}

impl ExitRule {
    pub fn never() -> Self {
        ExitRule::default()
    }

    pub fn below(coordinate: usize, level: f64) -> Self {
        ExitRule {
            conditions: vec![ExitCondition {
                coordinate,
                level,
                side: Side::Below,
            }],
        }
    }

    pub fn holds(&self, x: &[f64]) -> bool {
        self.conditions.iter().any(|c| match c.side {
            Side::Below => x[c.coordinate] <= c.level,
            Side::Above => x[c.coordinate] >= c.level,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    #[test]
    fn truncated_normal_moments_match_quadrature() {
        let law = MarkLaw::TruncatedNormal {
            mean: 0.2,
            sd: 0.5,
            lower: Some(-0.1),
            upper: Some(1.0),
        };
        // Reference moments from an adaptive quadrature of the density.
        let (m1_ref, m2_ref) = (0.36566403348284743, 0.21564058450204993);
        let m1 = law.expect(64, |z| z);
        let m2 = law.expect(64, |z| z * z);
        assert!((m1 - m1_ref).abs() < 1e-14);
        assert!((m2 - m2_ref).abs() < 1e-14);
        assert!((law.mean() - m1_ref).abs() < 1e-11);
        assert!((law.second_moment() - m2_ref).abs() < 1e-11);
    }

    #[test]
    fn untruncated_normal_mean_is_mean() {
        let law = MarkLaw::TruncatedNormal {
            mean: -0.3,
            sd: 0.2,
            lower: None,
            upper: None,
        };
        assert!((law.mean() + 0.3).abs() < 1e-15);
        assert!((law.expect(64, |z| z) + 0.3).abs() < 1e-9);
    }

    #[test]
    fn truncated_samples_stay_in_support() {
        let law = MarkLaw::TruncatedNormal {
            mean: 0.0,
            sd: 1.0,
            lower: Some(0.5),
            upper: Some(0.7),
        };
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        for _ in 0..10_000 {
            let z = law.sample(&mut rng);
            assert!((0.5..=0.7).contains(&z));
        }
    }

    #[test]
    fn policy_rejects_zero_fixed_cost_and_degenerate_band() {
        assert!(matches!(
            ThresholdPolicy::new(0, 1.0, 2.0, Direction::Below, 0.1, 0.0),
            Err(Error::Input { .. })
        ));
        assert!(matches!(
            ThresholdPolicy::new(0, 1.0, 1.0, Direction::Below, 0.1, 0.1),
            Err(Error::Regime(_))
        ));
        assert!(matches!(
            ThresholdPolicy::new(0, 1.0, 2.0, Direction::Above, 0.1, 0.1),
            Err(Error::Regime(_))
        ));
    }
}
