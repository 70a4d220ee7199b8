use std::path::PathBuf;

/// Errors raised by the simulation library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid specification: {0}")]
    InvalidSpec(String),

    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),

    #[error("degenerate element {element}: det J = {det_j:e}")]
    DegenerateElement { element: usize, det_j: f64 },

    #[error("inverted deformation (det F = {det_f:e})")]
    InvertedElement { det_f: f64 },

    #[error("viscous update failed: {0}")]
    IntegrationFailure(String),

    #[error("linear solve failed at step {step}: {reason}")]
    LinearSolve { step: usize, reason: String },

    #[error("Newton iteration did not converge at step {step} (t = {time}, residual {residual:e})")]
    NonConvergence {
        step: usize,
        time: f64,
        residual: f64,
    },

    #[error("snapshot matrix has rank zero, no basis can be built")]
    NoBasis,

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("file format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("scenario error: {}", .0.join("; "))]
    Scenario(Vec<String>),

    #[error("io error on {path}: {source}")]
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

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
