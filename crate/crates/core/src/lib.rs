//! Impulse control and stochastic differential games with jump-diffusions:
//! simulation, QVI residuals, closed-form solvers for a zero-sum consumption
//! game and an advertising duopoly, and Monte Carlo verification.

pub mod config;
pub mod duopoly;
pub mod error;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod qvi;
pub mod sde;
pub mod verification;
pub mod zero_sum;

pub use error::{Error, Result};
pub use model::{Direction, ExitRule, JumpSource, MarkLaw, ModelSpec, ThresholdPolicy};
pub use qvi::{Candidate, CostSpec, Domain, Obstacle, QviResidual, RegionLabel};
pub use sde::{simulate_path, InterventionEvent, PathRecord, Simulation};
pub use verification::{DeviationReport, PayoffEstimate, PayoffSpec};
