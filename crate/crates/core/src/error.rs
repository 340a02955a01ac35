use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("calibration failed: best Stackelberg residual {residual:.3e} at coupling scale {scale:.4}")]
    CalibrationFailed { residual: f64, scale: f64 },

    #[error("game generation failed after {attempts} attempts: {reason}")]
    GenerationFailed { attempts: usize, reason: String },

    #[error("invalid game file: {0}")]
    Config(String),

    #[error("malformed record: {0}")]
    Record(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(what: impl Into<String>) -> Self {
        Error::Dimension(what.into())
    }

    pub(crate) fn invalid(what: impl Into<String>) -> Self {
        Error::InvalidArgument(what.into())
    }
}
