use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Plan incompatible with the dataset (index out of range, wrong weight length).
    #[error("plan mismatch: {0}")]
    PlanMismatch(String),

    /// A loss or derivative evaluated to NaN/inf.
    #[error("non-finite {what} at row {row}")]
    NumericalEvaluation { row: usize, what: &'static str },

    #[error("invalid direction: {0}")]
    InvalidDirection(String),

    #[error("matrix is singular (smallest eigenvalue {min_eigenvalue:.3e}); consider adding a ridge penalty")]
    Singular { min_eigenvalue: f64 },

    #[error("secant regression stayed degenerate after {refreshes} refreshes (lambda_min(S'S/L) = {min_eigenvalue:.3e})")]
    ConditioningFailure {
        refreshes: usize,
        min_eigenvalue: f64,
    },

    #[error("chain diverged at iteration {iteration}")]
    Divergence {
        iteration: usize,
        last_finite: Vec<f64>,
    },

    #[error("insufficient draws: got {got}, need at least {need}")]
    InsufficientDraws { got: usize, need: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Coarse category used in machine-readable diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            Error::PlanMismatch(_) => "plan_mismatch",
            Error::NumericalEvaluation { .. } => "numerical_evaluation",
            Error::InvalidDirection(_) => "invalid_direction",
            Error::Singular { .. } => "singular",
            Error::ConditioningFailure { .. } => "conditioning_failure",
            Error::Divergence { .. } => "divergence",
            Error::InsufficientDraws { .. } => "insufficient_draws",
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    /// True for errors caused by user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Data(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
                | Error::Domain(_)
                | Error::PlanMismatch(_)
                | Error::InsufficientDraws { .. }
        )
    }
}
