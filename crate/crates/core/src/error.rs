//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by signal construction, DSP stages, dataset assembly,
/// training, and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time series: {0}")]
    InvalidSeries(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("resample target too small: need at least 2 output samples, got {0}")]
    ResampleTooSmall(usize),

    #[error("waveform too short for STFT: {len} samples < n_fft {n_fft}")]
    WaveformTooShort { len: usize, n_fft: usize },

    #[error("message amplitude {value} at index {index} outside [-1, 1]")]
    MessageOutOfRange { index: usize, value: f64 },

    #[error("Nyquist violation: fs {fs} Hz must exceed 2*(fc + delta_f) = {required} Hz")]
    NyquistViolation { fs: f64, required: f64 },

    #[error("series too short: spans {actual_s} s but windows require {required_s} s")]
    SeriesTooShort { required_s: f64, actual_s: f64 },

    #[error("empty window")]
    EmptyWindow,

    #[error("fold count {k} exceeds distinct subject count {subjects}")]
    TooFewSubjects { k: usize, subjects: usize },

    #[error("fold count must be at least 2, got {0}")]
    BadFoldCount(usize),

    #[error("csv parse error at line {line}: {message}")]
    CsvParse { line: u64, message: String },

    #[error("duplicate timestamp {timestamp_s} for subject {subject_id}")]
    DuplicateTimestamp { subject_id: String, timestamp_s: f64 },

    #[error("empty evaluation set")]
    EmptyEvaluation,

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("snapshot vote set must have odd size >= 1, got {0}")]
    EvenVoteSet(usize),

    #[error("vote epoch {0} has no stored snapshot")]
    MissingVoteEpoch(usize),

    #[error("fold {fold} failed: {source}")]
    FoldFailed {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("model file corrupt: {0}")]
    BadModelFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("image encode error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
