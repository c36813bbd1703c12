use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared across the pipeline.
///
/// Variants map onto the process exit codes used by the CLI:
/// configuration problems exit 1, data/geometry/state problems exit 2,
/// and infeasible-but-well-formed requests (e.g. `k` larger than the
/// source set) exit 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} ({context}): {detail}")]
    Parse {
        path: PathBuf,
        context: String,
        detail: String,
    },

    #[error("referential integrity: {0}")]
    ReferentialIntegrity(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("integrity error on {path}: {detail}")]
    Integrity { path: PathBuf, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("infeasible: {0}")]
    Infeasible(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            context: context.into(),
            detail: detail.into(),
        }
    }

    pub fn integrity(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Integrity {
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// Process exit code for the CLI: 0 success, 1 usage, 2 data error,
    /// 3 infeasible configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Infeasible(_) => 3,
            _ => 2,
        }
    }
}
