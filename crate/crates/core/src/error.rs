use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("bandwidth {h} is invalid: {reason}")]
    InvalidBandwidth { h: f64, reason: String },

    #[error("point {x} lies outside the grid [{lo}, {hi}]")]
    OutsideGrid { x: f64, lo: f64, hi: f64 },

    #[error("grid [{lo}, {hi}] captures only {captured:.6} of the density's mass")]
    InsufficientCoverage { lo: f64, hi: f64, captured: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("mixture density is nonpositive ({value}) at sample point {index} (x = {x})")]
    NonPositiveMixture { index: usize, x: f64, value: f64 },

    #[error("sample is empty")]
    EmptySample,

    #[error("sample value at index {index} is not finite")]
    NonFiniteSample { index: usize },

    #[error("zero scale: {0}")]
    ZeroScale(String),

    #[error("no candidate bandwidth produced a valid cross-validation score")]
    AllBandwidthsInvalid,

    #[error("identifiability check: {0}")]
    Identifiability(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("spec error at `{path}`: {message}")]
    Spec { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
