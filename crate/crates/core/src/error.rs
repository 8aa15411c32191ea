use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid has {actual} samples, expected {width}x{height}")]
    SampleCount { width: usize, height: usize, actual: usize },
    #[error("sample {index} is infinite; only finite values or NaN nodata are allowed")]
    NonFiniteSample { index: usize },
    #[error("grid contains no valid samples")]
    AllNodata,
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("invalid stack: {0}")]
    InvalidStack(String),
    #[error("stacks have mismatched dates")]
    MismatchedDates,
    #[error("operation needs at least two dates")]
    SingleDate,
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("class mask `{0}` selects no valid pixels")]
    EmptyMask(String),
    #[error("class masks overlap at pixel {0} but the set is not flagged as overlapping")]
    OverlappingMasks(usize),
    #[error("input value {value} outside [0, 1]")]
    OutOfRange { value: f64 },
    #[error("probability stacks do not match: {0}")]
    MismatchedStacks(String),
    #[error("non-finite probability at class {class}, date {date}, pixel {pixel}")]
    NonFiniteProbability { class: usize, date: usize, pixel: usize },
    #[error("insufficient overlap between target and reference")]
    InsufficientOverlap,
    #[error("no pixel is valid in both grids")]
    NoOverlap,
    #[error("no valid pixels")]
    NoValidPixels,
    #[error("input is constant; Otsu threshold undefined")]
    ConstantInput,
    #[error("x values are all equal")]
    DegenerateX,
    #[error("ground truth contains no labelled pixels")]
    EmptyGt,
    #[error("bad magic {found:?} in {format} file")]
    BadMagic { format: &'static str, found: String },
    #[error("colour PFM (\"PF\") is not supported")]
    UnsupportedColorPfm,
    #[error("truncated {0} file")]
    TruncatedFile(&'static str),
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("unsupported PGM maxval {0}; only 255 and 65535 are accepted")]
    MaxvalUnsupported(u32),
    #[error("manifest error in `{field}`: {reason}")]
    Manifest { field: String, reason: String },
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
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
}
