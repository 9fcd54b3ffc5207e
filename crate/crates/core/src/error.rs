use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of the operation (bad dimensions, pixel off-grid, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("timestamp {t} ms outside pose stream range [{start}, {end}] ms")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("no frame of the sweep intersects the mesh")]
    EmptySweep,

    #[error("temporal offset unidentifiable: localization error spread {spread_mm:e} mm over the search range")]
    UnidentifiableTemporalOffset { spread_mm: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("distance to an empty point set is undefined")]
    UndefinedDistance,

    #[error("degenerate histogram: fewer than two non-empty bins")]
    DegenerateHistogram,

    #[error("frame alignment error: {0}")]
    Alignment(String),

    #[error("missing mask for frame {frame} / method {method}")]
    MissingMask { frame: String, method: String },

    #[error("{}: unsupported schema: {msg}", path.display())]
    Schema { path: PathBuf, msg: String },

    #[error("{}: missing file ({what})", path.display())]
    MissingFile { path: PathBuf, what: String },

    #[error("{}: dimension mismatch: expected {expected}, found {found}", path.display())]
    DimensionMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{}: format error: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("{}: directory is locked by another writer", path.display())]
    Locked { path: PathBuf },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
