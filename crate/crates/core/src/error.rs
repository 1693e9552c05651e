use thiserror::Error;

/// Errors raised by the modelling, solver and allocation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Two points that must be distinct coincide (UAV and UE, or a
    /// perturbed UE position landing on a UAV).
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    /// A parameter violates its documented domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The Fisher information matrix is singular or too ill-conditioned to
    /// invert. `null_directions` spans the poorly observed subspace.
    #[error("rank-deficient geometry: {message}")]
    RankDeficient {
        message: String,
        null_directions: Vec<[f64; 3]>,
    },

    /// The UAV directions cannot produce an invertible information matrix.
    #[error("geometry infeasible: {0}")]
    GeometryInfeasible(String),

    /// The rate floor cannot be met within the total power budget.
    #[error("budget infeasible: {0}")]
    BudgetInfeasible(String),

    /// A conic subproblem was reported infeasible.
    #[error("subproblem infeasible: {0}")]
    SubproblemInfeasible(String),

    /// The conic solver failed numerically.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A conic problem was malformed (dimension mismatch, asymmetric LMI, ...).
    #[error("malformed problem: {0}")]
    MalformedProblem(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
