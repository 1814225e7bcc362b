use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("cell {0} is not an active cell of the mesh")]
    InactiveCell(usize),
    #[error("meshes are not nested: {0}")]
    NotNested(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero diagonal entry in row {0}")]
    ZeroDiagonal(usize),
    #[error("invalid spectral bounds ({lo}, {hi})")]
    InvalidBounds { lo: f64, hi: f64 },
    #[error("zero vector")]
    ZeroVector,
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("rank deficient block: {0}")]
    RankDeficient(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("vector violates the space constraints (residual {0:e})")]
    NonConforming(f64),
    #[error("problem too large for a dense solve: {n} > {max}")]
    TooLarge { n: usize, max: usize },
    #[error(
        "inner solve did not reach tolerance: relative residual {residual:e} after {steps} steps"
    )]
    NotConverged { steps: usize, residual: f64 },
    #[error("input sequence is not monotone")]
    NonMonotone,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("level {level}: {source}")]
    AtLevel {
        level: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_level(self, level: usize) -> Error {
        Error::AtLevel {
            level,
            source: Box::new(self),
        }
    }
}
