use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library. Each variant maps onto one CLI exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("problem is infeasible")]
    Infeasible,

    #[error("no integer solution found before the time limit")]
    NoSolution,

    #[error("solver failed at simulation step {step}: {source}")]
    SolverAtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("external solver: {0}")]
    ExternalSolver(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 invalid input, 3 solver failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Parse { .. } => 2,
            Error::Numerical(_)
            | Error::Infeasible
            | Error::NoSolution
            | Error::SolverAtStep { .. }
            | Error::ExternalSolver(_) => 3,
            Error::Io { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
