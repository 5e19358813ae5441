use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("need at least {min} samples, got {n}")]
    TooFewSamples { n: usize, min: usize },

    #[error("object {index} is not positive definite ({reason})")]
    NotPositiveDefinite { index: usize, reason: String },

    #[error("object {index} is not a valid probability vector: {reason}")]
    InvalidProbability { index: usize, reason: String },

    #[error("quantile grid {index} is not nondecreasing")]
    NonMonotoneGrid { index: usize },

    #[error("metric {metric} cannot be applied to {kind} responses")]
    IncompatibleMetric { metric: String, kind: String },

    #[error("invalid distance matrix: {0}")]
    InvalidDistanceMatrix(String),

    #[error("eigendecomposition did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },

    #[error("non-finite gradient at parameter {index} (value {value}, gradient norm {norm})")]
    NonFiniteGradient { index: usize, value: f64, norm: f64 },

    #[error("training diverged at iteration {iteration}: loss {loss}, output-gradient norm {output_grad_norm}, parameter-gradient norm {param_grad_norm}")]
    Diverged {
        iteration: usize,
        loss: f64,
        output_grad_norm: f64,
        param_grad_norm: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint layout mismatch: checkpoint has {checkpoint}, expected {expected}")]
    LayoutMismatch { checkpoint: String, expected: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. } | Error::NonFiniteGradient { .. } | Error::Diverged { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
