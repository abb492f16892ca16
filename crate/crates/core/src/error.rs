use thiserror::Error;

use crate::forest_geometry::NodeId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    /// Structurally unusable input: dangling references, non-simplicial cells,
    /// malformed CSV or coefficient files.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("degree {k} out of range 0..={max}")]
    DegreeOutOfRange { k: i64, max: usize },

    #[error("degree mismatch: expected {expected}, found {found}")]
    DegreeMismatch { expected: usize, found: usize },

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("node {l} is not in the jump neighbourhood of node {j}")]
    NotAdjacent { j: NodeId, l: NodeId },

    #[error("coefficient rejected: {0}")]
    Coefficient(String),

    #[error("{solver} did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("eigen solver failure: {0}")]
    Eigen(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// Solver-side failures as opposed to bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. } | Error::Factorization(_) | Error::Eigen(_)
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
