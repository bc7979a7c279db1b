use std::fmt;
use std::time::Duration;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A `(axis, value)` pair that a computation needed but could not find.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingSet {
    pub axis: String,
    pub value: String,
}

impl fmt::Display for MissingSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.axis, self.value)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty distribution over axis `{0}`")]
    EmptyDistribution(String),

    #[error("axis mismatch: expected `{expected}`, found `{found}`")]
    AxisMismatch { expected: String, found: String },

    #[error("distribution over `{axis}` is not normalized (total {total})")]
    NotNormalized { axis: String, total: f64 },

    #[error("not testable: {0}")]
    NotTestable(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("{what} did not converge within {iterations} iterations")]
    Convergence { what: &'static str, iterations: usize },

    #[error("missing counterfactual sets: {}", join_missing(.0))]
    MissingCoverage(Vec<MissingSet>),

    #[error("schema error at {location}: {message}")]
    Schema { location: String, message: String },

    #[error(transparent)]
    Provider(#[from] ProviderError),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn join_missing(missing: &[MissingSet]) -> String {
    missing.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl fmt::Display, source: std::io::Error) -> Self {
        Error::Io { path: path.to_string(), source }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Provider(_) => 4,
            _ => 3,
        }
    }
}

/// Failures raised by image-set providers.
#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("adapter timed out after {0:?}")]
    Timeout(Duration),

    #[error("adapter exited with status {code:?}: {stderr}")]
    Exit { code: Option<i32>, stderr: String },

    #[error("adapter returned HTTP status {0}")]
    Http(u16),

    #[error("adapter response failed validation: {0}")]
    Schema(String),

    #[error("provider cannot serve request: {0}")]
    Unavailable(String),

    #[error("adapter transport failure: {0}")]
    Transport(String),
}
