//! Command implementations behind the CLI: each takes a validated
//! [`RunConfig`] and returns the artifacts as typed values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{Command, Game, GridSpec, RunConfig};
use crate::duopoly::{self, DuopolyProblem, DuopolySolution};
use crate::error::{Error, Result};
use crate::model::{ExitRule, ThresholdPolicy};
use crate::qvi::{self, Candidate, Domain, GeneratorOptions, RegionLabel};
use crate::sde::{path_seed, simulate_path, PathRecord, Simulation};
use crate::verification::{
    self, AdmissibilityReport, DeviationReport, DuopolyPayoffOptions, PayoffEstimate, PayoffSpec, PolicyEdit, Sense,
};
use crate::zero_sum::{self, PsiBranch, ZeroSumProblem, ZeroSumSolution};

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::input(path.display().to_string(), format!("cannot read: {e}")))?;
    serde_json::from_str(&text).map_err(|e| Error::input(path.display().to_string(), format!("cannot parse: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueRow {
    pub x: f64,
    pub psi: f64,
    pub branch: PsiBranch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroSumRun {
    pub solution: ZeroSumSolution,
    pub value_table: Vec<ValueRow>,
}

fn zero_sum_x_max(cfg: &RunConfig, sol: &ZeroSumSolution) -> f64 {
    cfg.numerics.x_max.unwrap_or_else(|| (2.0 * sol.x_tilde).max(sol.x_tilde + 2.0))
}

pub fn solve_zero_sum(cfg: &RunConfig) -> Result<ZeroSumRun> {
    cfg.validate_for(Command::SolveZeroSum)?;
    let p = cfg.zero_sum.expect("validated");
    let solution = zero_sum::solve_free_boundaries(&p)?;
    for v in &solution.violations {
        log::warn!("closure violation {}: {}", v.condition, v.detail);
    }
    let x_max = zero_sum_x_max(cfg, &solution);
    let value = zero_sum::build_value_function(&solution, &p, x_max)?;
    let grid = match &cfg.numerics.grid {
        Some(g) => g.clone(),
        None => GridSpec {
            lower: vec![0.0],
            upper: vec![x_max],
            points: vec![201],
        },
    };
    let mut value_table = Vec::new();
    for x in grid.axis(0) {
        if !value.domain().contains(&[x]) {
            return Err(Error::input("numerics.grid", format!("x = {x} outside [0, x_max = {x_max}]")));
        }
        value_table.push(ValueRow {
            x,
            psi: value.psi(x),
            branch: value.branch(x),
        });
    }
    Ok(ZeroSumRun { solution, value_table })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DuopolyRun {
    pub solution: DuopolySolution,
    pub policies: [ThresholdPolicy; 2],
}

pub fn solve_duopoly(cfg: &RunConfig) -> Result<DuopolyRun> {
    cfg.validate_for(Command::SolveDuopoly)?;
    let p = cfg.duopoly.as_ref().expect("validated");
    let solution = duopoly::solve_equilibrium(p)?;
    for w in &solution.warnings {
        log::warn!("{w}");
    }
    let policies = duopoly::build_policies(&solution, p)?;
    Ok(DuopolyRun { solution, policies })
}

fn duopoly_solution(cfg: &RunConfig, p: &DuopolyProblem) -> Result<DuopolySolution> {
    match &cfg.inputs.solution {
        Some(path) => read_json(path),
        None => duopoly::solve_equilibrium(p),
    }
}

fn zero_sum_solution(cfg: &RunConfig, p: &ZeroSumProblem) -> Result<ZeroSumSolution> {
    match &cfg.inputs.solution {
        Some(path) => read_json(path),
        None => zero_sum::solve_free_boundaries(p),
    }
}

/// Equilibrium simulation setup for the configured game, with notes on
/// anything that had to be left out.
pub fn game_simulation(cfg: &RunConfig) -> Result<(Simulation, Vec<String>)> {
    let mut notes = Vec::new();
    let sim = match cfg.game()? {
        Game::ZeroSum(p) => {
            let sol = zero_sum_solution(cfg, &p)?;
            let [p1, p2] = zero_sum::build_policies(&sol, &p);
            let p1 = p1?;
            let p2 = match p2 {
                Ok(pol) => Some(pol),
                Err(e) => {
                    notes.push(format!("player 2 policy unavailable: {e}; simulated with player 1 only"));
                    None
                }
            };
            Simulation {
                model: p.model(),
                policies: [Some(p1), p2],
                x0: cfg.numerics.x0.clone().unwrap_or_else(|| vec![0.5 * (sol.x_low + sol.x_tilde)]),
                horizon: cfg.numerics.horizon,
                dt: cfg.numerics.dt,
                exit: p.exit(),
            }
        }
        Game::Duopoly(p) => {
            let sol = duopoly_solution(cfg, &p)?;
            let policies: [ThresholdPolicy; 2] = match &cfg.inputs.policies {
                Some(path) => read_json(path)?,
                None => duopoly::build_policies(&sol, &p)?,
            };
            let x0 = cfg.numerics.x0.clone().unwrap_or_else(|| {
                (0..2).map(|i| 0.5 * (policies[i].trigger + policies[i].retarget)).collect()
            });
            let [a, b] = policies;
            Simulation {
                model: p.model(),
                policies: [Some(a), Some(b)],
                x0,
                horizon: cfg.numerics.horizon,
                dt: cfg.numerics.dt,
                exit: ExitRule::never(),
            }
        }
    };
    Ok((sim, notes))
}

/// One path of the configured simulation, seeded as path 0 of `numerics.seed`.
pub fn simulate(cfg: &RunConfig) -> Result<PathRecord> {
    cfg.validate_for(Command::Simulate)?;
    let sim = match &cfg.simulation {
        Some(s) => s.clone(),
        None => {
            let (s, notes) = game_simulation(cfg)?;
            for n in notes {
                log::warn!("{n}");
            }
            s
        }
    };
    simulate_path(&sim, path_seed(cfg.numerics.seed, 0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    /// Whose payoff: a firm index, or the single zero-sum payoff (player 1's gain).
    pub player: u8,
    pub estimate: PayoffEstimate,
    /// Candidate value at `(0, x0)`.
    pub analytic: f64,
    /// `(estimate − analytic)/SE`.
    pub z_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub game: String,
    pub simulation: Simulation,
    pub estimates: Vec<EstimateRow>,
    pub deviations: Option<DeviationReport>,
    pub admissibility: Option<AdmissibilityReport>,
    pub notes: Vec<String>,
}

pub fn verify(cfg: &RunConfig) -> Result<VerificationReport> {
    cfg.validate_for(Command::Verify)?;
    let (sim, mut notes) = game_simulation(cfg)?;
    let n = cfg.numerics.n_paths;
    let seed = cfg.numerics.seed;
    let (game, payoffs, senses, analytic, players): (&str, [PayoffSpec; 2], [Sense; 2], Vec<f64>, Vec<u8>) =
        match cfg.game()? {
            Game::ZeroSum(p) => {
                let sol = zero_sum_solution(cfg, &p)?;
                let v = zero_sum::build_value_function(&sol, &p, zero_sum_x_max(cfg, &sol).max(2.0 * sim.x0[0]))?;
                let spec = verification::consumption_game_payoff(&p);
                notes.push("one payoff functional: player 1's gain is player 2's loss".into());
                (
                    "zero-sum",
                    [spec.clone(), spec],
                    [Sense::Maximize, Sense::Minimize],
                    vec![v.value(0.0, &sim.x0)?],
                    vec![1],
                )
            }
            Game::Duopoly(p) => {
                let sol = duopoly_solution(cfg, &p)?;
                let values = duopoly::build_firm_values(&sol, &p)?;
                let opts = DuopolyPayoffOptions {
                    discount_costs: cfg.verify.discount_costs,
                    terminal: cfg.verify.terminal,
                };
                (
                    "duopoly",
                    [
                        verification::duopoly_firm_payoff(&p, 0, opts),
                        verification::duopoly_firm_payoff(&p, 1, opts),
                    ],
                    [Sense::Maximize, Sense::Maximize],
                    vec![values[0].value(0.0, &sim.x0)?, values[1].value(0.0, &sim.x0)?],
                    vec![1, 2],
                )
            }
        };
    let specs: Vec<PayoffSpec> = players.iter().map(|&i| payoffs[i as usize - 1].clone()).collect();
    let est = verification::estimate_payoffs(&sim, &specs, n, seed)?;
    let estimates = players
        .iter()
        .zip(est)
        .zip(&analytic)
        .map(|((&player, estimate), &a)| EstimateRow {
            player,
            estimate,
            analytic: a,
            z_score: if estimate.se > 0.0 {
                (estimate.mean - a) / estimate.se
            } else {
                f64::NAN
            },
        })
        .collect();
    let deviations = if cfg.verify.deviations {
        let mut edits = Vec::new();
        for (i, pol) in sim.policies.iter().enumerate() {
            if pol.is_some() {
                edits.extend(PolicyEdit::standard_set(i as u8 + 1));
            } else {
                notes.push(format!("no deviation tests for player {}: no policy", i + 1));
            }
        }
        Some(verification::deviation_test(&sim, &payoffs, senses, &edits, n, seed, cfg.verify.paired)?)
    } else {
        None
    };
    let admissibility = if cfg.verify.dt_ladder.is_empty() {
        None
    } else {
        Some(verification::admissibility_stats(
            &sim,
            &cfg.verify.dt_ladder,
            cfg.verify.admissibility_paths,
            seed,
        )?)
    };
    Ok(VerificationReport {
        game: game.into(),
        simulation: sim,
        estimates,
        deviations,
        admissibility,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionRow {
    pub x: Vec<f64>,
    /// One QVI residual per value function (one for the zero-sum game).
    pub residuals: Vec<f64>,
    pub branches: Vec<String>,
    pub label: RegionLabel,
    pub ambiguous: bool,
}

fn cartesian(grid: &GridSpec) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = (0..grid.lower.len()).map(|i| grid.axis(i)).collect();
    let mut out = vec![vec![]];
    for axis in &axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &v in axis {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// QVI residuals and region labels on the configured grid. Needs a solution artifact.
pub fn region_map(cfg: &RunConfig) -> Result<Vec<RegionRow>> {
    cfg.validate_for(Command::RegionMap)?;
    if cfg.inputs.solution.is_none() {
        return Err(Error::input("inputs.solution", "region-map needs a solved solution artifact"));
    }
    let tol = cfg.numerics.binding_tol;
    let points = cfg.numerics.impulse_points;
    let opts = GeneratorOptions::default();
    let mut rows = Vec::new();
    match cfg.game()? {
        Game::ZeroSum(p) => {
            let sol = zero_sum_solution(cfg, &p)?;
            let x_max = zero_sum_x_max(cfg, &sol);
            let grid = cfg.numerics.grid.clone().unwrap_or(GridSpec {
                lower: vec![0.0],
                upper: vec![x_max],
                points: vec![201],
            });
            let v = zero_sum::build_value_function(&sol, &p, x_max.max(grid.upper[0]))?;
            let obs = zero_sum::obstacles(&p, v.x_max(), points);
            let zero = |_t: f64, _x: &[f64]| 0.0;
            for x in cartesian(&grid) {
                let r = qvi::qvi_residual_zero_sum(&p.model(), &v, &zero, 0.0, &x, &obs, &opts)?;
                let c = qvi::classify_region([&v, &v], 0.0, &x, [&obs.maximizer, &obs.minimizer], tol)?;
                rows.push(RegionRow {
                    x,
                    residuals: vec![r.residual],
                    branches: vec![r.branch.to_string()],
                    label: c.label,
                    ambiguous: c.ambiguous,
                });
            }
        }
        Game::Duopoly(p) => {
            let sol = duopoly_solution(cfg, &p)?;
            let grid = cfg.numerics.grid.clone().unwrap_or_else(|| {
                let d = duopoly::default_domain(&sol);
                GridSpec {
                    lower: d.lower,
                    upper: d.upper,
                    points: vec![41, 41],
                }
            });
            // Pad so finite-difference stencils and impulse targets stay inside.
            let pad = 1.0;
            let domain = Domain {
                lower: grid.lower.iter().map(|v| v - pad).collect(),
                upper: grid.upper.iter().map(|v| v + pad).collect(),
            };
            let values = duopoly::build_firm_values_on(&sol, &p, domain.clone())?;
            let obs = [
                duopoly::obstacle(&p, 0, &domain, points),
                duopoly::obstacle(&p, 1, &domain, points),
            ];
            let model = p.model();
            let run = [duopoly::running_reward(&p, 0), duopoly::running_reward(&p, 1)];
            for x in cartesian(&grid) {
                let mut residuals = Vec::new();
                let mut branches = Vec::new();
                for i in 0..2 {
                    let r = qvi::qvi_residual_nonzero_sum(&model, &values[i], &run[i], 0.0, &x, &obs[i], &opts)?;
                    residuals.push(r.residual);
                    branches.push(r.branch.to_string());
                }
                let c = qvi::classify_region([&values[0], &values[1]], 0.0, &x, [&obs[0], &obs[1]], tol)?;
                rows.push(RegionRow {
                    x,
                    residuals,
                    branches,
                    label: c.label,
                    ambiguous: c.ambiguous,
                });
            }
        }
    }
    Ok(rows)
}
