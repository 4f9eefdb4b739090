use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("covariance is not positive definite (component {component}, smallest eigenvalue {min_eigenvalue:e})")]
    NonPositiveDefiniteCovariance { component: usize, min_eigenvalue: f64 },

    #[error("bad mixture weights: {0}")]
    BadWeights(String),

    #[error("product mixture would have {count} components (limit {limit})")]
    ComponentBudgetExceeded { count: usize, limit: usize },

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("Fisher information matrix is singular (smallest eigenvalue {0:e})")]
    SingularFisherMatrix(f64),

    #[error("tail assumption violated: min(t,1-t) = {lhs} < 2exp(-(b-a)^2/32) = {rhs}")]
    TailAssumptionViolated { lhs: f64, rhs: f64 },

    #[error("sample counts differ: {0} vs {1}")]
    CountMismatch(usize, usize),

    #[error("isotropic family variance is not positive (sigma = {0})")]
    SigmaNonPositive(f64),

    #[error("deficit {deficit:e} does not exceed its error {error:e}; ratio undefined")]
    DegenerateDeficit { deficit: f64, error: f64 },

    #[error("grid too coarse: eigenvalue of C overshoots 1 by {0:e}")]
    GridTooCoarse(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
