use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised while reading NIfTI-1 headers and payloads.
#[derive(Debug, Error)]
pub enum ParseError {
    #[error("file is {len} bytes, shorter than the 348-byte NIfTI-1 header")]
    TooShort { len: usize },
    #[error("sizeof_hdr is {0}, expected 348 in either byte order")]
    SizeofHdr(i32),
    #[error("magic is {0:?}, expected \"n+1\\0\" or \"ni1\\0\"")]
    Magic([u8; 4]),
    #[error("dim[0] is {0}, expected 1..=7")]
    DimCount(i16),
    #[error("dim[{axis}] is {value}, expected a positive extent")]
    Dim { axis: usize, value: i16 },
    #[error("dim[{axis}] is {value}; only 3D volumes are supported")]
    NotThreeD { axis: usize, value: i16 },
    #[error("pixdim[{axis}] is {value}, expected a positive finite spacing")]
    Pixdim { axis: usize, value: f32 },
    #[error("datatype {code} is not a supported integer or floating scalar type")]
    Datatype { code: i16 },
    #[error("bitpix is {bitpix}, inconsistent with datatype {code}")]
    Bitpix { code: i16, bitpix: i16 },
    #[error("vox_offset is {0}, expected at least 348 for single-file NIfTI")]
    VoxOffset(f32),
    #[error("payload truncated: need {expected} bytes after offset {offset}, found {found}")]
    Truncated {
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("gzip stream is corrupt: {0}")]
    Gzip(std::io::Error),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch { left: [usize; 3], right: [usize; 3] },
    #[error("spacing mismatch: {left:?} vs {right:?} (relative tolerance 1e-4)")]
    SpacingMismatch { left: [f64; 3], right: [f64; 3] },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("split integrity violated: group {subject_id}@{site} appears in both partitions")]
    SplitIntegrity { subject_id: String, site: String },
    #[error("all {0} scan pairs failed")]
    AllPairsFailed(usize),
    #[error("{path}: row {row}: {message}")]
    Schema {
        path: PathBuf,
        row: usize,
        message: String,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(path: impl Into<PathBuf>, row: usize, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            row,
            message: message.into(),
        }
    }
}
