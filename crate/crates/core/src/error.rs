use thiserror::Error;

/// Errors raised by the aggregation engine and the federation simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    /// An iterative solver stopped before reaching its tolerance.
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("degenerate subset: {0}")]
    DegenerateSubset(String),

    #[error("degenerate round: {0}")]
    DegenerateRound(String),

    #[error("invalid config `{field}`: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("local training diverged at round {round} on client {client}")]
    Divergence { round: usize, client: usize },

    #[error("gini coefficient is undefined for an all-zero distribution")]
    UndefinedGini,
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
