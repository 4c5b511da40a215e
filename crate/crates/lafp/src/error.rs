//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by rate-region computations.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix that must be (strictly) positive definite is not.
    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// A linear-assignment setting violates the regularity conditions
    /// (conditional covariance of the auxiliary variable nearly singular).
    #[error("degenerate setting: {0}")]
    DegenerateSetting(String),

    /// Malformed input text (JSON syntax, wrong types).
    #[error("parse error: {0}")]
    Parse(String),

    /// Well-formed input that violates a semantic constraint.
    #[error("validation error: {0}")]
    Validation(String),

    /// Grid-mode covariance enumeration only supports small dimensions.
    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    /// The joint fade construction only supports the 2-user / 2-atom /
    /// uniform-marginal shape.
    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),

    /// A noise correlation coefficient outside (-1, 1).
    #[error("invalid correlation coefficient {0}")]
    InvalidCorrelation(f64),

    /// An operation that requires an exact user count got something else.
    #[error("expected {expected} users, got {got}")]
    WrongUserCount { expected: usize, got: usize },

    /// Region operations on an empty region.
    #[error("empty region")]
    EmptyRegion,

    /// Every candidate precoding matrix produced a degenerate setting.
    #[error("all candidate F matrices are degenerate")]
    AllCandidatesDegenerate,

    /// An iterative solver failed to reach its convergence criterion.
    #[error("no convergence: {0}")]
    NonConvergence(String),

    /// Quantization grid leaks too much probability mass into overflow cells.
    #[error("quantization grid too coarse: overflow mass {overflow_mass}")]
    GridTooCoarse { overflow_mass: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code class: 1 for input problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_)
            | Error::Validation(_)
            | Error::Io(_)
            | Error::WrongUserCount { .. } => 1,
            _ => 2,
        }
    }
}
