use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid problem: {0}")]
    Validation(String),

    #[error("infeasible subproblem")]
    Infeasible,

    #[error("subsolver did not converge after {iterations} iterations (best KKT residual {best_residual:.3e})")]
    NonConvergence {
        iterations: usize,
        best_residual: f64,
    },

    #[error("degenerate adjacency ball: {0}")]
    DegenerateBall(String),

    #[error("agent {agent} at iteration {iteration}: {source}")]
    Agent {
        agent: usize,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("empty feasible grid")]
    EmptyGrid,

    #[error("insufficient trials: {0}")]
    InsufficientTrials(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at(self, agent: usize, iteration: usize) -> Self {
        Error::Agent {
            agent,
            iteration,
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping agent/iteration context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Agent { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for failures of the local QP solver (infeasibility or non-convergence).
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self.root(),
            Error::Infeasible | Error::NonConvergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
