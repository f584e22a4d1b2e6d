use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid framework config: {0}")]
    InvalidConfig(String),
    #[error("empty prediction vector")]
    EmptyPredictions,
    #[error("prediction {value} at index {index} is outside [0, 1]")]
    PredictionOutOfRange { index: usize, value: f64 },
    #[error("invalid percentile bounds [{p_min}, {p_max}]")]
    InvalidPercentiles { p_min: f64, p_max: f64 },
    #[error("grid step {0} does not evenly divide 1")]
    InvalidGridStep(f64),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid layer dims: {0}")]
    InvalidDims(String),
    #[error("invalid learning rate {0}")]
    InvalidLearningRate(f64),
    #[error("undefined: {0}")]
    SingleClass(&'static str),
    #[error("invalid synthetic spec: {field}: {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error("invalid train settings: {0}")]
    InvalidSettings(String),
    #[error("no slides: {0}")]
    NoSlides(&'static str),
    #[error("loss became non-finite at epoch {epoch} on slide {slide_id}")]
    NonFiniteLoss { epoch: usize, slide_id: String },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
