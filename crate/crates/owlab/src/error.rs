use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty window: {0}")]
    EmptyWindow(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("non-finite result in {0}")]
    NonFinite(String),

    #[error("quadrature overflow on cube {cube}")]
    QuadratureOverflow { cube: String },

    #[error("near-singular weight on cube {cube} at node {node}")]
    NearSingular { cube: String, node: usize },

    #[error("optimizer did not converge (best value {best})")]
    NotConverged { best: f64 },

    #[error("window mismatch")]
    WindowMismatch,

    #[error("grid misalignment: {0}")]
    Misaligned(String),

    #[error("aliasing: band product reaches {support}, grid cutoff is {cutoff}")]
    Aliasing { support: f64, cutoff: f64 },

    #[error("parse error: {0}")]
    Parse(String),
}
