use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("meshes do not match: {0}")]
    MeshMismatch(String),

    #[error("linear solve failed: {reason} (relative residual {residual:e})")]
    Solver { reason: String, residual: f64 },

    #[error("time step {step_index} failed: {source}")]
    Step {
        step_index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("study run at resolution {resolution:e} failed: {source}")]
    Study {
        resolution: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("{what} is unsupported: {why}")]
    Unsupported { what: &'static str, why: String },

    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("I/O error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Relative residual carried by solver failures, directly or wrapped in a step error.
    pub fn residual(&self) -> Option<f64> {
        match self {
            Error::Solver { residual, .. } => Some(*residual),
            Error::Step { source, .. } | Error::Study { source, .. } => source.residual(),
            _ => None,
        }
    }
}
