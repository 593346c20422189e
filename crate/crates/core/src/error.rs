use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, JanusError>;

#[derive(Debug, Error)]
pub enum JanusError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("infeasible injection spec: {0}")]
    Infeasible(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl JanusError {
    pub fn mismatch(
        context: &'static str,
        expected: impl std::fmt::Display,
        found: impl std::fmt::Display,
    ) -> Self {
        JanusError::DimensionMismatch {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        JanusError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        JanusError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            JanusError::Divergence { .. } => 3,
            JanusError::Io { .. } => 1,
            _ => 2,
        }
    }
}
