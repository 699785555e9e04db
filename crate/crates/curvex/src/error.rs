use std::path::PathBuf;

use curvex_core::dataset::DatasetError;
use curvex_core::field::FieldError;
use curvex_core::geometry::GeometryError;
use curvex_core::hybrid::HybridError;
use curvex_core::neural::NeuralError;
use curvex_core::preprocess::PreprocessError;

/// Exit status for usage errors.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for unreadable or inconsistent data.
pub const EXIT_DATA: i32 = 3;
/// Exit status for numerical breakdowns.
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Hybrid(#[from] HybridError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) | Error::Geometry(_) => EXIT_USAGE,
            Error::Neural(NeuralError::NonFinite { .. })
            | Error::Preprocess(PreprocessError::ZeroVariance(_))
            | Error::Field(FieldError::DegenerateNormal(..)) => EXIT_NUMERICAL,
            Error::Neural(NeuralError::InvalidConfig(_))
            | Error::Dataset(DatasetError::InvalidConfig(_)) => EXIT_USAGE,
            _ => EXIT_DATA,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
