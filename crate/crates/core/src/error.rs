use thiserror::Error;

/// Failure taxonomy shared by every module.
///
/// The CLI maps [`Error::Input`] and [`Error::Io`] to exit status 1 and the
/// solver-side variants ([`Error::Regime`], [`Error::NoSolution`],
/// [`Error::Bracketing`]) to exit status 2.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value violates a documented constraint.
    #[error("invalid input `{field}`: {constraint}")]
    Input { field: String, constraint: String },

    /// Evaluation requested outside a function's domain or stencil.
    #[error("domain error: {0}")]
    Domain(String),

    /// The parameters lie outside the regime where the threshold structure exists.
    #[error("regime error: {0}")]
    Regime(String),

    /// Iterative solve failed from every start; carries the best residuals seen.
    #[error("no solution: {message} (best residuals {residuals:?})")]
    NoSolution { message: String, residuals: Vec<f64> },

    /// Root bracket could not be established within the configured bound.
    #[error("root bracketing failed: {0}")]
    Bracketing(String),

    /// A simulated state or payoff became non-finite.
    #[error("non-finite value at step {step} (t = {time}) on path seed {seed}: {message}")]
    NonFinite {
        step: usize,
        time: f64,
        seed: u64,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn input(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Input {
            field: field.into(),
            constraint: constraint.into(),
        }
    }

    /// True for failures that come from the mathematics rather than from the caller.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::Regime(_) | Error::NoSolution { .. } | Error::Bracketing(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
