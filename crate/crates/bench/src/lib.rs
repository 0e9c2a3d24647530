//! Shared fixtures for the benchmarks.

use impulse_core::duopoly::{self, DuopolyProblem, DuopolySolution, FirmParams};
use impulse_core::zero_sum::ZeroSumProblem;
use impulse_core::{ExitRule, Simulation};

pub fn zero_sum_problem() -> ZeroSumProblem {
    ZeroSumProblem {
        alpha: 1.0,
        beta: 1.0,
        delta: 0.5,
        lambda1: 0.2,
        kappa1: 0.05,
        lambda2: 0.2,
        kappa2: 0.05,
    }
}

pub fn duopoly_problem() -> DuopolyProblem {
    DuopolyProblem::symmetric(
        FirmParams {
            mu: 0.1,
            sigma: 0.3,
            alpha: 1.5,
            beta: 0.5,
            lambda: 1.0,
            kappa: 0.05,
            gamma: 0.0,
        },
        1.0,
    )
}

pub fn duopoly_solution() -> DuopolySolution {
    duopoly::solve_equilibrium(&duopoly_problem()).expect("reference duopoly solves")
}

/// Both firms on their solved bands, started mid-band.
pub fn duopoly_simulation(horizon: f64, dt: f64) -> Simulation {
    let p = duopoly_problem();
    let s = duopoly_solution();
    let [a, b] = duopoly::build_policies(&s, &p).expect("solved bands are valid");
    Simulation {
        model: p.model(),
        policies: [Some(a), Some(b)],
        x0: (0..2).map(|i| 0.5 * (s.x_star[i] + s.x_hat[i])).collect(),
        horizon,
        dt,
        exit: ExitRule::never(),
    }
}
