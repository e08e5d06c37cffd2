use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid cube: {0}")]
    InvalidCube(String),
    #[error("no children: cube {0} is at the finest level")]
    NoChildren(String),
    #[error("zero-mass cube {0}")]
    ZeroMass(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid exponent: {0}")]
    InvalidExponent(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid function: {0}")]
    InvalidFunction(String),
    #[error("invalid weight: {0}")]
    InvalidWeight(String),
    #[error("invalid norm spec: {0}")]
    InvalidNorm(String),
    #[error("vectors not pairwise disjoint")]
    NotDisjoint,
    #[error("all-zero tuple")]
    ZeroTuple,
    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("degenerate weight family: {0}")]
    DegenerateFamily(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
