//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("graph is not connected after {attempts} samples (n={n}, p_c={p_c}); edge probability too small")]
    ResampleLimit { n: usize, p_c: f64, attempts: usize },

    #[error("kappa={kappa} must exceed lambda_max(L)/2 = {half_lambda_max}")]
    KappaTooSmall { kappa: f64, half_lambda_max: f64 },

    #[error("malformed edge list at line {line}: {reason}")]
    EdgeList { line: usize, reason: String },

    #[error("quantized vector decode failed: {0}")]
    Decode(String),

    #[error("dataset error at line {line}: {reason}")]
    Dataset { line: usize, reason: String },

    #[error("objective has no analytic optimum ({0})")]
    NoOptimum(&'static str),

    #[error("config error at line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("config is missing required key `{0}`")]
    MissingKey(&'static str),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("run '{name}': {source}")]
    InRun {
        name: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by user-supplied configuration rather than
    /// by the run itself.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config { .. } | Error::MissingKey(_) | Error::InvalidArgument(_) | Error::Dataset { .. } => true,
            Error::InRun { source, .. } | Error::AtIteration { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
