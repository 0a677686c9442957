use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ReidError>;

#[derive(Debug, Error)]
pub enum ReidError {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("bad magic in {}: expected \"REID\", found {found:?}", path.display())]
    BadMagic { path: PathBuf, found: Vec<u8> },

    #[error("unsupported format version {0} (expected 1)")]
    UnsupportedVersion(u32),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value at row {row}, col {col}")]
    NonFiniteValue { row: usize, col: usize },

    #[error("I/O failure: {0}")]
    IoFailure(#[from] std::io::Error),

    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },

    #[error("duplicate image id {0:?} within one split")]
    DuplicateId(String),

    #[error("track {0} spans more than one split")]
    TrackSplitConflict(u64),

    #[error("dimension mismatch: left has {left} columns, right has {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("empty matrix list")]
    EmptyList,

    #[error("no fusion weight for metadata family {0:?}")]
    MissingWeight(String),

    #[error("k = {k} too large for {n} items (need k < n)")]
    KTooLarge { k: usize, n: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("batch has no valid (anchor, positive, negative) triplet")]
    NoValidTriplet,

    #[error("class {0} has a single sample; batch-hard mining needs at least two per class")]
    SingletonClass(usize),

    #[error("batch contains a single class")]
    SingleClass,

    #[error("class index {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },

    #[error("non-finite logit at index {0}")]
    NonFiniteLogit(usize),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("no relevant gallery items")]
    NoRelevant,

    #[error("missing identity labels: {0}")]
    MissingLabels(String),

    #[error("invalid synthetic config: {0}")]
    ConfigInvalid(String),
}

impl ReidError {
    /// Process exit code: 1 for I/O and system failures, 2 for validation and contract failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ReidError::IoFailure(_) | ReidError::MissingFile(_) => 1,
            _ => 2,
        }
    }
}
