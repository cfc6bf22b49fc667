use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A scalar parameter is outside its admissible domain.
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// Factorization or solve failed even after jitter.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("singular rank-one update (denominator {0:e})")]
    SingularUpdate(f64),

    /// Caller violated a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("ingestion error at row {row}: {msg}")]
    Ingest { row: usize, msg: String },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            e @ Error::AtStep { .. } => e,
            other => Error::AtStep {
                step,
                source: Box::new(other),
            },
        }
    }
}
