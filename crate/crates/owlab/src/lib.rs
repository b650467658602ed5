//! Numerical laboratory for operator-weighted dyadic analysis.
//!
//! Cube quasi-norms of matrix weights, 𝒜_p and reverse Hölder estimators,
//! weighted Besov and Triebel–Lizorkin sequence norms, almost-diagonal
//! matrices, averaging and sparse operators, sequence-level trace maps and
//! Littlewood–Paley filter pairs.

pub mod almostdiag;
pub mod dyadic;
pub mod error;
pub mod lpfilters;
pub mod operators;
pub mod optim;
#[cfg(test)]
mod proptests;
pub mod quad;
pub mod seqspace;
pub mod traceext;
pub mod weights;

pub use dyadic::{BabcParams, DyadicCube, GridWindow};
pub use error::{Error, Result};
pub use weights::{Quadrature, TargetSpace, WeightModel};
