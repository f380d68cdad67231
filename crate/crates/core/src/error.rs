use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the scheduling library.
#[derive(Debug, Error)]
pub enum RevsError {
    /// The edge list does not describe a tree rooted at the substation.
    #[error("network structure: {0}")]
    Structure(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid tariff: {0}")]
    Tariff(String),

    #[error("invalid load profile: {0}")]
    Profile(String),

    /// The EV specification admits no feasible charging schedule.
    #[error("infeasible EV specification: {0}")]
    InfeasibleSpec(String),

    /// A concrete schedule breaks the window or state-of-charge constraints.
    #[error("infeasible schedule: {0}")]
    InfeasibleSchedule(String),

    /// No joint schedule satisfies the voltage limits.
    #[error("problem infeasible: {0}")]
    Infeasible(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error(
        "operator QP did not converge within {iterations} iterations \
         (interval {interval}, primal violation {primal:.3e}, dual residual {dual:.3e})"
    )]
    OperatorNonConvergence {
        interval: usize,
        iterations: usize,
        primal: f64,
        dual: f64,
    },

    #[error("model produced negative squared voltage {value} at node {node}, interval {interval}")]
    NegativeVoltage {
        node: usize,
        interval: usize,
        value: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("configuration: {0}")]
    Config(String),
}

impl RevsError {
    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        RevsError::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RevsError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical solvers rather than of the input data.
    pub fn is_solver_failure(&self) -> bool {
        matches!(self, RevsError::OperatorNonConvergence { .. })
    }
}

pub type Result<T, E = RevsError> = std::result::Result<T, E>;

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(RevsError::Dimension {
            context,
            expected,
            got,
        })
    }
}
