use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("retraction failed: matrix is numerically rank deficient")]
    RankDeficient,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("non-finite {0}")]
    NonFinite(&'static str),

    #[error("descent direction required (directional derivative {0:e} >= 0)")]
    NotDescent(f64),

    #[error("unknown language `{0}`")]
    UnknownLanguage(String),

    #[error("duplicate language `{0}`")]
    DuplicateLanguage(String),

    #[error("duplicate edge between `{0}` and `{1}`")]
    DuplicateEdge(String, String),

    #[error("self-loop on language `{0}`")]
    SelfLoop(String),

    #[error("language graph is disconnected; components: {0:?}")]
    Disconnected(Vec<Vec<String>>),

    #[error("variant `{variant}` does not accept {what}")]
    VariantMismatch { variant: String, what: String },

    #[error("empty dictionary: {0}")]
    EmptyDictionary(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("model file checksum mismatch")]
    Checksum,

    #[error("evaluation set is empty: {0}")]
    EmptyEvaluation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(expected: impl ToString, got: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
