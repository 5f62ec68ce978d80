use thiserror::Error;

/// Every failure the lab can surface. The variants mirror the error classes
/// named by each component's contract so callers (and the CLI exit-code
/// mapping) can branch on them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("label error: {0}")]
    Label(String),
    #[error("batch composition error: {0}")]
    BatchComposition(String),
    #[error("empty clustering: {0}")]
    EmptyClustering(String),
    #[error("diagnostics error: {0}")]
    Diagnostics(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by bad user input rather than by a run.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Parse { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(what: &str, expected: impl std::fmt::Debug, got: impl std::fmt::Debug) -> Error {
    Error::Shape(format!("{what}: expected {expected:?}, got {got:?}"))
}
