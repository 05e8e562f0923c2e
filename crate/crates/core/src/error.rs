use thiserror::Error;

/// Errors raised anywhere in the discretization, solver and analysis pipeline.
#[derive(Debug, Error)]
pub enum BiotError {
    #[error("parameter `{name}` = {value} is out of range: {reason}")]
    RangeViolation {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate cell {cell}: |det J| = {det:e}")]
    DegenerateCell { cell: usize, det: f64 },

    #[error("incompatible spaces: {0}")]
    IncompatibleSpaces(String),

    #[error("factorization of the {block} block failed")]
    FactorizationFailure { block: &'static str },

    #[error("MINRES stopped after {iterations} iterations with relative residual {residual:e}")]
    MaxIterExceeded {
        iterations: usize,
        residual: f64,
        best: Box<crate::solver::MinresOutcome>,
    },

    #[error("MINRES breakdown at iteration {iteration}: {reason}")]
    BreakdownDetected { iteration: usize, reason: String },

    #[error("eigenvalue computation failed: {0}")]
    EigFailure(String),

    #[error("norm matrix is not SPD ({0})")]
    SingularNormMatrix(String),

    #[error("configuration error: {0}")]
    ConfigError(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BiotError {
    /// Short machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            BiotError::RangeViolation { .. } => "RangeViolation",
            BiotError::DimensionMismatch(_) => "DimensionMismatch",
            BiotError::DegenerateCell { .. } => "DegenerateCell",
            BiotError::IncompatibleSpaces(_) => "IncompatibleSpaces",
            BiotError::FactorizationFailure { .. } => "FactorizationFailure",
            BiotError::MaxIterExceeded { .. } => "MaxIterExceeded",
            BiotError::BreakdownDetected { .. } => "BreakdownDetected",
            BiotError::EigFailure(_) => "EigFailure",
            BiotError::SingularNormMatrix(_) => "SingularNormMatrix",
            BiotError::ConfigError(_) => "ConfigError",
            BiotError::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, BiotError>;
