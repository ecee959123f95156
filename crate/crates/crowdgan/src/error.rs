//! Crate-wide error type.

use std::path::PathBuf;

/// Errors surfaced by library operations.
///
/// Shape mismatches inside the numeric kernels are programmer errors and
/// panic instead; everything that can be triggered by user data or runtime
/// conditions comes through here.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("scene has no ground-truth group labels")]
    MissingLabels,

    #[error("partitions cover different pedestrian sets")]
    PedestrianSetMismatch,

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("non-finite gradient encountered")]
    NonFiniteGradient,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code buckets: 1 for bad input, 2 for internal failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::MissingLabels
            | Error::PedestrianSetMismatch
            | Error::Config(_)
            | Error::Io(_) => 1,
            Error::Diverged { .. } | Error::NonFiniteGradient | Error::Checkpoint(_) => 2,
        }
    }
}
