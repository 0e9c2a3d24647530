//! Run configuration shared by the command-line front end.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::duopoly::DuopolyProblem;
use crate::error::{Error, Result};
use crate::sde::Simulation;
use crate::zero_sum::ZeroSumProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SolveZeroSum,
    SolveDuopoly,
    Simulate,
    Verify,
    RegionMap,
}

impl std::fmt::Display for Command {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Command::SolveZeroSum => "solve-zero-sum",
            Command::SolveDuopoly => "solve-duopoly",
            Command::Simulate => "simulate",
            Command::Verify => "verify",
            Command::RegionMap => "region-map",
        };
        f.write_str(s)
    }
}

/// Rectangular evaluation grid; one entry per state coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points: Vec<usize>,
}

impl GridSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.lower.len() != dim || self.upper.len() != dim || self.points.len() != dim {
            return Err(Error::input("numerics.grid", format!("lower/upper/points need {dim} entries")));
        }
        for i in 0..dim {
            if !(self.lower[i].is_finite() && self.upper[i].is_finite() && self.upper[i] > self.lower[i]) {
                return Err(Error::input("numerics.grid", "need finite lower < upper"));
            }
            if self.points[i] < 2 {
                return Err(Error::input("numerics.grid.points", "must be ≥ 2"));
            }
        }
        Ok(())
    }

    /// Grid nodes along coordinate `i`, endpoints included.
    pub fn axis(&self, i: usize) -> Vec<f64> {
        let n = self.points[i];
        (0..n)
            .map(|k| self.lower[i] + (self.upper[i] - self.lower[i]) * k as f64 / (n - 1) as f64)
            .collect()
    }
}

fn default_dt() -> f64 {
    1e-3
}
fn default_paths() -> usize {
    10_000
}
fn default_seed() -> u64 {
    20_240_601
}
fn default_horizon() -> f64 {
    10.0
}
fn default_impulse_points() -> usize {
    201
}
fn default_binding_tol() -> f64 {
    1e-6
}
fn default_true() -> bool {
    true
}
fn default_ladder() -> Vec<f64> {
    vec![1e-2, 5e-3, 1e-3]
}
fn default_admissibility_paths() -> usize {
    2_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    /// Time step of the simulation grid (time units).
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Simulation horizon (time units).
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Initial state; defaults to a point inside the continuation region.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Upper end of the zero-sum state domain (state units).
    #[serde(default)]
    pub x_max: Option<f64>,
    /// Grid for value tables and region maps.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    /// Points per stage of the intervention-operator search.
    #[serde(default = "default_impulse_points")]
    pub impulse_points: usize,
    /// Relative tolerance for "obstacle binds".
    #[serde(default = "default_binding_tol")]
    pub binding_tol: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            dt: default_dt(),
            n_paths: default_paths(),
            seed: default_seed(),
            horizon: default_horizon(),
            x0: None,
            x_max: None,
            grid: None,
            impulse_points: default_impulse_points(),
            binding_tol: default_binding_tol(),
        }
    }
}

impl Numerics {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::input("numerics.dt", "must be finite and > 0"));
        }
        if self.n_paths < 2 {
            return Err(Error::input("numerics.n_paths", "must be ≥ 2"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::input("numerics.horizon", "must be finite and > 0"));
        }
        if let Some(x) = self.x_max {
            if !(x.is_finite() && x > 0.0) {
                return Err(Error::input("numerics.x_max", "must be finite and > 0"));
            }
        }
        if self.impulse_points < 2 {
            return Err(Error::input("numerics.impulse_points", "must be ≥ 2"));
        }
        if !(self.binding_tol.is_finite() && self.binding_tol > 0.0) {
            return Err(Error::input("numerics.binding_tol", "must be finite and > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyOptions {
    /// Common random numbers for deviation tests.
    #[serde(default = "default_true")]
    pub paired: bool,
    #[serde(default = "default_true")]
    pub deviations: bool,
    /// Charge duopoly impulse costs at `e^{−εt}`.
    #[serde(default)]
    pub discount_costs: bool,
    /// Include the duopoly terminal reward.
    #[serde(default)]
    pub terminal: bool,
    /// Time steps for the admissibility ladder; empty skips the check.
    #[serde(default = "default_ladder")]
    pub dt_ladder: Vec<f64>,
    #[serde(default = "default_admissibility_paths")]
    pub admissibility_paths: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            paired: true,
            deviations: true,
            discount_costs: false,
            terminal: false,
            dt_ladder: default_ladder(),
            admissibility_paths: default_admissibility_paths(),
        }
    }
}

/// Artifacts from an earlier run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    /// `zero_sum_solution.json` or `duopoly_solution.json`.
    #[serde(default)]
    pub solution: Option<PathBuf>,
    /// `policies.json` written by `solve-duopoly`.
    #[serde(default)]
    pub policies: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; must match the subcommand when given.
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub zero_sum: Option<ZeroSumProblem>,
    #[serde(default)]
    pub duopoly: Option<DuopolyProblem>,
    /// Explicit simulation setup for `simulate`.
    #[serde(default)]
    pub simulation: Option<Simulation>,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub verify: VerifyOptions,
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default)]
    pub output: Output,
}

/// The problem a command operates on.
#[derive(Debug, Clone, PartialEq)]
pub enum Game {
    ZeroSum(ZeroSumProblem),
    Duopoly(DuopolyProblem),
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::input("config", e.to_string()))
    }

    /// Checks that the fields `command` needs are present and valid.
    pub fn validate_for(&self, command: Command) -> Result<()> {
        if let Some(c) = self.command {
            if c != command {
                return Err(Error::input("command", format!("config is for `{c}`, invoked as `{command}`")));
            }
        }
        self.numerics.validate()?;
        if let Some(p) = &self.zero_sum {
            p.validate()?;
        }
        if let Some(p) = &self.duopoly {
            p.validate()?;
        }
        match command {
            Command::SolveZeroSum => {
                self.zero_sum.as_ref().ok_or_else(|| Error::input("zero_sum", "required by solve-zero-sum"))?;
            }
            Command::SolveDuopoly => {
                self.duopoly.as_ref().ok_or_else(|| Error::input("duopoly", "required by solve-duopoly"))?;
            }
            Command::Simulate => {
                if let Some(s) = &self.simulation {
                    s.validate()?;
                } else {
                    self.game()?;
                }
            }
            Command::Verify => {
                self.game()?;
                for &dt in &self.verify.dt_ladder {
                    if !(dt.is_finite() && dt > 0.0) {
                        return Err(Error::input("verify.dt_ladder", "entries must be finite and > 0"));
                    }
                }
                if self.verify.admissibility_paths < 2 {
                    return Err(Error::input("verify.admissibility_paths", "must be ≥ 2"));
                }
            }
            Command::RegionMap => {
                self.game()?;
            }
        }
        if let (Some(g), Ok(game)) = (&self.numerics.grid, self.game()) {
            g.validate(match game {
                Game::ZeroSum(_) => 1,
                Game::Duopoly(_) => 2,
            })?;
        }
        if let (Some(x0), Ok(game)) = (&self.numerics.x0, self.game()) {
            let d = match game {
                Game::ZeroSum(_) => 1,
                Game::Duopoly(_) => 2,
            };
            if x0.len() != d || x0.iter().any(|v| !v.is_finite()) {
                return Err(Error::input("numerics.x0", format!("needs {d} finite entries")));
            }
        }
        Ok(())
    }

    /// Exactly one of `zero_sum` and `duopoly`.
    pub fn game(&self) -> Result<Game> {
        match (&self.zero_sum, &self.duopoly) {
            (Some(p), None) => Ok(Game::ZeroSum(*p)),
            (None, Some(p)) => Ok(Game::Duopoly(p.clone())),
            (None, None) => Err(Error::input("zero_sum/duopoly", "one problem section is required")),
            (Some(_), Some(_)) => Err(Error::input("zero_sum/duopoly", "give only one problem section")),
        }
    }
}
