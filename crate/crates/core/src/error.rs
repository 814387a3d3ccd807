use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("argument out of supported range: {0}")]
    Range(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("singular input: {0}")]
    Singular(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error(
        "integration became unstable at t = {time}: {detail}; retry with dt/2 = {suggested_dt}"
    )]
    Stability {
        time: f64,
        detail: String,
        suggested_dt: f64,
    },

    #[error("no steady state after t = {elapsed} (last residual {})", residuals.last().copied().unwrap_or(f64::NAN))]
    Convergence { elapsed: f64, residuals: Vec<f64> },

    #[error("fit input rejected: {0}")]
    FitInput(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("optimizer failed to converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    Optimization {
        iterations: usize,
        gradient_norm: f64,
        trace: Vec<f64>,
    },

    #[error("no interior maximum in the sampled data")]
    NoInteriorMaximum,

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stability { .. } | Error::Convergence { .. } | Error::Optimization { .. } => 3,
            Error::Io(_) | Error::Json(_) | Error::Linalg(_) => 1,
            _ => 2,
        }
    }
}
