use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = FpgmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FpgmError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The dilated Sobel response of a mask was empty, so there is no edge band to analyse.
    #[error("edge mask is empty")]
    EmptyEdgeRegion,

    #[error("no usable samples")]
    NoUsableSamples,

    #[error("prior has not seen any samples")]
    UnusablePrior,

    #[error("target has no valid pixels")]
    EmptyTarget,

    /// Boundary distances need a nonempty mask on both sides.
    #[error("surface distance undefined for an empty mask")]
    UndefinedDistance,

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("unsupported prior format version {0}")]
    UnsupportedVersion(u32),

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

    #[error("{id}: {source}")]
    Item {
        id: String,
        #[source]
        source: Box<FpgmError>,
    },
}

impl FpgmError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        FpgmError::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FpgmError::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach an item identifier (image id, file stem) to an error.
    pub fn for_item(self, id: impl Into<String>) -> Self {
        FpgmError::Item {
            id: id.into(),
            source: Box::new(self),
        }
    }
}
