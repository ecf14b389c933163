use thiserror::Error;

/// Errors produced anywhere in the reconciliation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("cycle detected through `{0}`")]
    Cycle(String),

    #[error("`{child}` has more than one parent (`{first}` and `{second}`)")]
    MultipleParents {
        child: String,
        first: String,
        second: String,
    },

    #[error("hierarchy is disconnected: found roots {0:?}")]
    Disconnected(Vec<String>),

    #[error("invalid hierarchy: {0}")]
    InvalidHierarchy(String),

    #[error("invalid group spec: {0}")]
    InvalidGroupSpec(String),

    #[error("candidate basis must have {expected} series, got {actual}")]
    BasisCardinality { expected: usize, actual: usize },

    #[error("index {0} repeated in candidate basis")]
    RepeatedIndex(usize),

    #[error("index {index} out of range for {n} series")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("no valid basis contains the immutable set {immutable:?}: {reason}")]
    NoValidBasis { immutable: Vec<String>, reason: String },

    #[error("insufficient error history: {0}")]
    InsufficientHistory(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("all series have zero error variance")]
    ZeroVariance,

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("design matrix is rank deficient (singular value ratio {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    #[error("active-set solver hit the iteration cap ({iterations}); best KKT residual {kkt_residual:.3e}")]
    IterationCap {
        iterations: usize,
        kkt_residual: f64,
        best: Vec<f64>,
    },

    #[error("oracle enumeration limited to {max} bounded coordinates, got {actual}")]
    TooManyBounded { max: usize, actual: usize },

    #[error("oracle found no KKT point")]
    NoKktPoint,

    #[error("series too short: {0}")]
    SeriesTooShort(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dims(expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            expected: expected.into(),
            actual: actual.into(),
        }
    }
}
