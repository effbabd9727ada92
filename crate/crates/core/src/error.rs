use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = DreError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DreError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate affinity row {row}: {reason}")]
    DegenerateRow { row: usize, reason: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unknown feature tap `{0}`")]
    UnknownTap(String),

    #[error("batch-norm statistics need at least 2 rows in train mode, got {0}")]
    BatchTooSmall(usize),

    #[error("{path}: parse error at byte {offset}: {reason}")]
    Parse {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("{path}: row {row}, column {col}: {reason}")]
    Table {
        path: PathBuf,
        row: usize,
        col: usize,
        reason: String,
    },

    #[error("model file: {0}")]
    Format(String),

    #[error("model file checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("model file version {0} is not supported")]
    UnsupportedVersion(u32),

    #[error("labels are required for this metric")]
    MissingLabels,

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("training: {0}")]
    Training(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DreError {
    pub(crate) fn dims(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        DreError::DimensionMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
