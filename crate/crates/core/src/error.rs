use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no points")]
    NoPoints,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension override {requested} is smaller than max feature index {seen}")]
    DimensionOverride { requested: usize, seen: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("all centers are inactive")]
    NoActiveCenters,

    #[error("distance undefined: {active} active source centers for {targets} target centers")]
    TooFewActiveCenters { active: usize, targets: usize },

    #[error("instance too large for enumeration (n={n}, k={k}; limit n<=14, k<=3)")]
    EnumerationTooLarge { n: usize, k: usize },

    #[error("sample has only {distinct} distinct points, cannot form {k} components; increase m0")]
    TooFewDistinct { distinct: usize, k: usize },

    #[error("scripted sample at step {step} is nearest center {nearest}, script says {scripted}")]
    MembershipViolation {
        step: usize,
        scripted: usize,
        nearest: usize,
    },

    #[error("invalid {field}: {msg}")]
    Invalid { field: String, msg: String },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem rather than by the inputs.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
