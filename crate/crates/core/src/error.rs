use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("exponent pair is not admissible: {0}")]
    NotAdmissible(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("critical regime: window exponent delta vanishes")]
    CriticalDelta,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field lives on a different grid")]
    GridMismatch,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("time {t} outside trajectory range [0, {end}]")]
    TimeOutOfRange { t: f64, end: f64 },
    #[error("time mesh mismatch: {0}")]
    MeshMismatch(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("noise coefficient {index} is unbounded on the grid")]
    UnboundedCoefficient { index: usize },
    #[error("noise model is not conservative (complex coefficients)")]
    NotConservative,
    #[error("no contraction: window shrank below one time step at t = {t} (last ratio {ratio})")]
    NoContraction { t: f64, ratio: f64 },
    #[error("Picard iteration did not converge within {iters} iterations at t = {t} (difference {diff:e})")]
    MaxItersExceeded { t: f64, iters: usize, diff: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed input: {0}")]
    Decode(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "InvalidParams",
            Error::NotAdmissible(_) => "NotAdmissible",
            Error::OutOfRange(_) => "OutOfRange",
            Error::CriticalDelta => "CriticalDelta",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::GridMismatch => "GridMismatch",
            Error::NonFinite(_) => "NonFinite",
            Error::EmptyTrajectory => "EmptyTrajectory",
            Error::TimeOutOfRange { .. } => "TimeOutOfRange",
            Error::MeshMismatch(_) => "MeshMismatch",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::UnboundedCoefficient { .. } => "UnboundedCoefficient",
            Error::NotConservative => "NotConservative",
            Error::NoContraction { .. } => "NoContraction",
            Error::MaxItersExceeded { .. } => "MaxItersExceeded",
            Error::Config(_) => "Config",
            Error::Decode(_) => "Decode",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }
}
