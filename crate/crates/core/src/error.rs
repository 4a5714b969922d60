use thiserror::Error;

/// Everything that can go wrong inside the toolkit.
///
/// Input problems (bad files, violated preconditions) and numerical failures
/// are kept apart so the CLI can map them to different exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("insufficient correlation structure: {0}")]
    InsufficientCorrelation(String),
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("no factors extracted: no eigenvalue exceeds 1")]
    NoFactors,
    #[error("model not identified: {0}")]
    NotIdentified(String),
    #[error("optimizer did not converge after {iterations} iterations (gradient max-norm {gradient:.3e})")]
    NonConvergence { iterations: usize, gradient: f64 },
    #[error("collinear predictors: {0}")]
    Collinearity(String),
    #[error("unobserved outcome category {0}")]
    UnobservedCategory(usize),
    #[error("missing value: {0}")]
    Missing(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True when the error stems from the caller's input rather than from a
    /// numerical failure inside an estimator.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::MalformedHeader(_)
                | Error::Parse(_)
                | Error::InvalidInput(_)
                | Error::EmptyDataset
                | Error::Missing(_)
                | Error::Json(_)
        )
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
