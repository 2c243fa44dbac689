use std::path::PathBuf;

use thiserror::Error;

use crate::domain::PartitionViolation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid slice spec for slice {slice_id}: {reason}")]
    InvalidSlice { slice_id: u32, reason: String },

    #[error("infeasible partition: {0}")]
    InfeasiblePartition(#[from] PartitionViolation),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown cell {0}")]
    UnknownCell(u32),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("non-finite input to estimator")]
    NonFiniteInput,

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("model format version {found} is not supported (expected {expected})")]
    ModelVersion { found: u32, expected: u32 },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: u64, reason: String },

    #[error("enumeration budget exceeded: {points} grid points > cap {cap}; use a coarser grid")]
    GridBudget { points: u64, cap: u64 },

    #[error("optimizer failed (cell {cell}, start {start}, iteration {iteration}): {source}")]
    Solver {
        cell: u32,
        start: usize,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("plot: {0}")]
    Plot(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn stage(stage: &'static str, source: Error) -> Self {
        Error::Stage {
            stage,
            source: Box::new(source),
        }
    }
}
