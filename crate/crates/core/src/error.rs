use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, OmniError>;

#[derive(Debug, Error)]
pub enum OmniError {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("length mismatch in {context}: expected {expected}, got {actual}")]
    Length {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("image of {width}x{height} px is smaller than one {side} px patch")]
    ImageTooSmall {
        width: usize,
        height: usize,
        side: usize,
    },

    #[error("bounding box ({x}, {y}, side {side}) lies outside a {width}x{height} canvas")]
    OutOfBounds {
        x: usize,
        y: usize,
        side: usize,
        width: usize,
        height: usize,
    },

    #[error("no pseudo-label canvas for tissue {0}")]
    MissingCanvas(String),

    #[error("empty mask: {0}")]
    EmptyMask(&'static str),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("placement failed for {class} after {attempts} attempts")]
    Placement { class: String, attempts: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl OmniError {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        OmniError::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OmniError::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(OmniError::Length {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}
