use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("structurally singular system in {step}: rank {rank} of {expected}")]
    Singular {
        step: String,
        rank: usize,
        expected: usize,
    },

    #[error("ill-conditioned projection (condition estimate {0:.3e})")]
    IllConditioned(f64),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },

    #[error("order selection failed: no singular value gap (singular values {0:?})")]
    OrderSelection(Vec<f64>),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Input/config problems map to exit code 1, numerical failures to 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension(_) | Error::Input(_) | Error::Io(_) | Error::Json(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
