use thiserror::Error;

/// Errors raised by the enhancement engine and its harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("invalid frame params: {0}")]
    InvalidFrameParams(String),

    #[error("invalid wave: {0}")]
    InvalidWave(String),

    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),

    #[error("segment too short: {0}")]
    SegmentTooShort(&'static str),

    #[error("no frames in segment")]
    NoFrames,

    #[error("beamforming requires >= 2 channels (got {0})")]
    TooFewChannels(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("filter frozen")]
    FilterFrozen,

    #[error("filter not frozen")]
    FilterNotFrozen,

    #[error("silent context")]
    SilentContext,

    #[error("context shorter than minimum: {0}")]
    ContextTooShort(String),

    #[error("oracle requires clean reference")]
    OracleRequiresCleanReference,

    #[error("zero reference")]
    ZeroReference,

    #[error("no active windows")]
    NoActiveWindows,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sample rate mismatch: expected {expected} Hz, got {actual} Hz")]
    SampleRateMismatch { expected: u32, actual: u32 },

    #[error("interferer too short: need {needed} samples, have {available}")]
    InterfererTooShort { needed: usize, available: usize },

    #[error("silent target span")]
    SilentTarget,

    #[error("invalid sidecar: {0}")]
    InvalidSidecar(String),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
