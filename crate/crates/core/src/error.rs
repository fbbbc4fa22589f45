use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Stream(#[from] std::io::Error),

    #[error("png decode error: {0}")]
    PngDecode(#[from] png::DecodingError),

    #[error("png encode error: {0}")]
    PngEncode(#[from] png::EncodingError),

    #[error("unsupported image format: {0}")]
    UnsupportedImage(String),

    #[error("malformed manifest: {0}")]
    Manifest(String),

    #[error("malformed csv: {0}")]
    Csv(String),

    #[error("dimension mismatch: expected {expected:?}, found {found:?} ({context})")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
        context: String,
    },

    #[error("unknown band id `{0}`")]
    UnknownBand(String),

    #[error("unknown mask code {code} at pixel ({x}, {y})")]
    UnknownMaskCode { code: u8, x: usize, y: usize },

    #[error("empty region of interest")]
    EmptyRoi,

    #[error("empty image")]
    EmptyImage,

    #[error("superpixel count {k} exceeds available pixels {pixels}")]
    TooManySegments { k: usize, pixels: usize },

    #[error("segment {0} contains no labeled pixels")]
    UnlabeledSegment(u32),

    #[error("empty segment")]
    EmptySegment,

    #[error("no votes for either class")]
    NoVotes,

    #[error("training data contains a single class")]
    SingleClass,

    #[error("class `{0}` absent from ground truth")]
    MissingClass(&'static str),

    #[error("empty matrix")]
    EmptyMatrix,

    #[error("feature dimension mismatch: model has {expected}, input has {found}")]
    FeatureDimension { expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
