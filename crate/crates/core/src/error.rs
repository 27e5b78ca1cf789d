use thiserror::Error;

/// Errors raised by the core numerics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("field mean {mean:e} exceeds the zero-mean tolerance {tol:e}")]
    MeanConstraint { mean: f64, tol: f64 },

    #[error("kernel hypothesis violated: {0}")]
    KernelHypothesis(String),

    #[error("value {value} outside the admissible interval ({lo}, {hi})")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("initial data rejected at cell {cell} (value {value}): {reason}")]
    InitialData {
        cell: usize,
        value: f64,
        reason: String,
    },

    #[error("step failed at t = {t} after {halvings} halvings; residual history {residuals:?}")]
    StepFailure {
        t: f64,
        halvings: usize,
        residuals: Vec<f64>,
    },

    #[error("numerical blow-up (non-finite values) at t = {t}")]
    NumericalBlowup { t: f64 },

    #[error("table parse error on line {line}: {message}")]
    Table { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
