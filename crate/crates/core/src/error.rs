use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rejection sampling for {what} exhausted {retries} retries")]
    RetriesExhausted { what: &'static str, retries: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("zero-norm vector in {0}")]
    ZeroVector(&'static str),

    #[error("direction is not a unit vector (norm {0})")]
    NotUnit(f64),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("sample rate mismatch: expected {expected} Hz, got {actual} Hz")]
    SampleRateMismatch { expected: u32, actual: u32 },

    #[error("source coincides with microphone")]
    SourceAtMic,

    #[error("empty span")]
    EmptySpan,

    #[error("interferer has zero energy over the mixing span")]
    SilentInterferer,

    #[error("offset {offset} + length {len} exceeds primary length {primary_len}")]
    OffsetOutOfBounds {
        offset: usize,
        len: usize,
        primary_len: usize,
    },

    #[error("{0} is empty")]
    EmptyPool(&'static str),

    #[error("input of {0} samples is shorter than the 400-sample receptive field")]
    TooShort(usize),

    #[error("degenerate cosine: {0} has zero norm")]
    DegenerateCosine(&'static str),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("class id {id} out of range 0..{classes}")]
    ClassOutOfRange { id: usize, classes: usize },

    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),

    #[error("wav format: {0}")]
    Wav(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("verification failed: {0}")]
    Verification(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Stable short identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::RetriesExhausted { .. } => "retries_exhausted",
            Error::InvalidConfig(_) => "invalid_config",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::ZeroVector(_) => "zero_vector",
            Error::NotUnit(_) => "not_unit",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::SampleRateMismatch { .. } => "sample_rate_mismatch",
            Error::SourceAtMic => "source_at_mic",
            Error::EmptySpan => "empty_span",
            Error::SilentInterferer => "silent_interferer",
            Error::OffsetOutOfBounds { .. } => "offset_out_of_bounds",
            Error::EmptyPool(_) => "empty_pool",
            Error::TooShort(_) => "too_short",
            Error::DegenerateCosine(_) => "degenerate_cosine",
            Error::Dimension(_) => "dimension",
            Error::ClassOutOfRange { .. } => "class_out_of_range",
            Error::UnknownStrategy(_) => "unknown_strategy",
            Error::Wav(_) => "wav_format",
            Error::Version { .. } => "version",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Verification(_) => "verification",
        }
    }
}
