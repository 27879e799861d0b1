use std::path::PathBuf;

/// Errors produced by the analysis pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected_width}x{expected_height}, got {actual_width}x{actual_height}")]
    DimensionMismatch {
        expected_width: usize,
        expected_height: usize,
        actual_width: usize,
        actual_height: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("skeleton graph is empty")]
    EmptyGraph,

    #[error("loop orientation is inverted: both path ends lie above the apex")]
    InvalidLoopOrientation,

    #[error("keypoint ({row}, {col}) is {distance:.1} px from the nearest path point (limit {limit:.1})")]
    KeypointOffPath {
        row: i64,
        col: i64,
        distance: f64,
        limit: f64,
    },

    #[error("micron scale is not configured")]
    MissingScale,

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    /// True when the error is caused by bad user input rather than an
    /// internal failure. Drives the CLI exit-code split.
    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::DimensionMismatch { .. }
                | Error::InvalidParameter(_)
                | Error::Parse { .. }
                | Error::Io { .. }
                | Error::Image { .. }
                | Error::MissingScale
        )
    }
}
