use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix is not positive semi-definite (smallest eigenvalue {min:e}, largest {max:e})")]
    NotPositiveSemidefinite { min: f64, max: f64 },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("embedding dimension q={q} must satisfy 1 <= q <= p={p}")]
    QExceedsP { q: usize, p: usize },

    #[error("projection matrix is rank deficient (q={q})")]
    RankDeficient { q: usize },

    #[error("projection columns are not orthonormal (deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("class weight {0} must lie strictly between 0 and 1")]
    InvalidWeight(f64),

    #[error("Chernoff exponent {0} must lie in [0, 1]")]
    InvalidExponent(f64),

    #[error("covariance blend of dimension {dim} is singular")]
    SingularBlend { dim: usize },

    #[error("eigenvalue {0} is not strictly positive")]
    NonPositiveEigenvalue(f64),

    #[error("random projection still rank deficient after {attempts} draws (p={p}, q={q})")]
    RankDeficientAfterRetries { p: usize, q: usize, attempts: usize },

    #[error("first covariance is singular even after adding ridge {ridge:e}")]
    SingularAfterRidge { ridge: f64 },

    #[error("class {0} has no observations")]
    EmptyClass(u8),

    #[error("degrees of freedom {df} too small for dimension {dim}")]
    DegreesOfFreedomTooSmall { df: f64, dim: usize },

    #[error("configuration rejected: {0}")]
    ConfigRejected(String),

    #[error("insufficient rows: {0}")]
    InsufficientRows(String),

    #[error("embedded covariance of class {class} is singular at q={q}")]
    SingularEmbeddedCovariance { class: u8, q: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("records mix modes `{0}` and `{1}`")]
    MixedModes(String, String),

    #[error("grid expands to no cells: {0}")]
    EmptyGrid(String),

    #[error("record sink failure: {0}")]
    SinkWriteFailure(String),

    #[error("{field}: {message}")]
    Config { field: String, message: String },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { field: field.into(), message: message.into() }
    }
}
