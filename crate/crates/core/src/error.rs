use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("{path}: parse error at {location}: {message}")]
    Parse {
        path: PathBuf,
        location: String,
        message: String,
    },

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("rank-deficient covariance: eigenvalue {index} is {eigenvalue:e}")]
    RankDeficient { index: usize, eigenvalue: f64 },

    #[error("degenerate histogram: {0}")]
    DegenerateHistogram(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("series did not converge: {0}")]
    SeriesNonConvergence(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate regression: {0}")]
    DegenerateRegression(String),

    #[error("missing metric: {0}")]
    MissingMetric(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl Into<String>, found: impl Into<String>) -> Self {
        Error::Shape {
            expected: expected.into(),
            found: found.into(),
        }
    }

    /// Prefixes the message of string-carrying variants with `what`.
    pub(crate) fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            Error::Validation(m) => Error::Validation(format!("{what}: {m}")),
            Error::Singular(m) => Error::Singular(format!("{what}: {m}")),
            Error::DegenerateHistogram(m) => Error::DegenerateHistogram(format!("{what}: {m}")),
            Error::Domain(m) => Error::Domain(format!("{what}: {m}")),
            Error::SeriesNonConvergence(m) => Error::SeriesNonConvergence(format!("{what}: {m}")),
            Error::Numerical(m) => Error::Numerical(format!("{what}: {m}")),
            other => other,
        }
    }
}
