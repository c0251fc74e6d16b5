use thiserror::Error;

/// Errors raised by the homogenization library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomogError {
    #[error("degenerate point: {0}")]
    DegeneratePoint(String),
    #[error("invalid step profile: {0}")]
    InvalidProfile(String),
    #[error("unsupported growth exponent p = {0} (the g extension requires p = 1)")]
    UnsupportedGrowth(f64),
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unsupported solver: {0}")]
    UnsupportedSolver(String),
    #[error("unsupported boundary condition: {0}")]
    UnsupportedBoundary(String),
    #[error("matrix is not tangent at the base point: {0}")]
    NotTangent(String),
    #[error("growth or Lipschitz bound violated: {0}")]
    GrowthViolation(String),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("unsupported manifold: {0}")]
    UnsupportedManifold(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, HomogError>;
