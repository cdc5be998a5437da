use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid {n_phi}x{n_theta}: both sizes must be even and at least 4")]
    InvalidGrid { n_phi: usize, n_theta: usize },

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("right-hand side has nonzero spherical mean {mean:e} (norm {norm:e}); a zero-mean source is required when alpha = 0")]
    MeanViolation { mean: f64, norm: f64 },

    #[error("singular mode system at azimuthal wavenumber l = {l} (alpha = {alpha})")]
    SingularMode { l: i64, alpha: f64 },

    #[error("unsupported shift: {0}")]
    UnsupportedShift(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite or divergent state at step {step} (max |u| = {max_abs:e})")]
    Diverged { step: usize, max_abs: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid { .. } => "invalid_grid",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::GridMismatch => "grid_mismatch",
            Error::MeanViolation { .. } => "mean_violation",
            Error::SingularMode { .. } => "singular_mode",
            Error::UnsupportedShift(_) => "unsupported_shift",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::Diverged { .. } => "diverged",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
        }
    }
}
