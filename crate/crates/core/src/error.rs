use thiserror::Error;

/// Errors produced by the laboratory.
#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    /// An argument or configuration value is outside its documented domain.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A numerical routine failed. `partial` carries the best value reached
    /// and `sample` the offending Monte Carlo sample index, when known.
    #[error("numerical error: {message}")]
    Numerical { message: String, partial: Option<f64>, sample: Option<usize> },

    /// An iterative algorithm produced a non-finite value.
    #[error("diverged at iteration {iteration} in block {block}: {message}")]
    Diverged { iteration: usize, block: usize, message: String },

    /// The requested object would not fit within the configured memory cap.
    #[error("resource error: {required_bytes} bytes required, cap is {cap_bytes} bytes")]
    Resource { required_bytes: u64, cap_bytes: u64 },

    /// The wave analysis found no positive wave speed.
    #[error("undecodable: {0}")]
    Undecodable(String),

    /// An experiment could not be completed.
    #[error("experiment error: {0}")]
    Experiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical { message: msg.into(), partial: None, sample: None }
    }

    /// True for errors caused by invalid inputs rather than by the computation.
    pub fn is_parameter(&self) -> bool {
        matches!(self, Error::Parameter(_) | Error::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
