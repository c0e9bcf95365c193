// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

/// Errors raised by the drydown library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: column '{column}' not found in header")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}, row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("duplicate timestamp {timestamp}")]
    DuplicateTimestamp { timestamp: String },

    #[error("timestamp {timestamp} is not on the {step_seconds} s grid starting at {start}")]
    OffGrid {
        timestamp: String,
        start: String,
        step_seconds: i64,
    },

    #[error("series is empty")]
    EmptySeries,

    #[error("missing-value runs exceed the maximum fillable gap of {max_gap}: {spans:?}")]
    GapTooLong {
        max_gap: usize,
        spans: Vec<(usize, usize)>,
    },

    #[error("missing values at the {0} of the series cannot be interpolated")]
    UnbracketedGap(&'static str),

    #[error("series contains missing values; interpolate before analysis")]
    MissingValues,

    #[error("covariate missing at series index {0}")]
    CovariateMissing(usize),

    #[error("segment of {len} points is too short; need at least {min}")]
    SegmentTooShort { len: usize, min: usize },

    #[error("invalid segment range {start}..{end} for series of length {len}")]
    InvalidRange { start: usize, end: usize, len: usize },

    #[error("series of length {len} is shorter than twice the minimum segment length {min_seg_len}")]
    SeriesTooShort { len: usize, min_seg_len: usize },

    #[error("no finite-cost segmentation exists for this series")]
    NoValidSegmentation,

    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
