use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("RIR shorter than mixing time")]
    RirShorterThanMixingTime,
    #[error("silent RIR")]
    SilentRir,
    #[error("insufficient decay range")]
    InsufficientDecay,
    #[error("band radius {radius} exceeds F/2 = {max}")]
    BandRadius { radius: usize, max: usize },
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("signal too short: {0}")]
    TooShort(String),
    #[error("no free decay detected")]
    NoFreeDecay,
    #[error("rank-deficient calibration")]
    RankDeficientCalibration,
    #[error("silent reference")]
    SilentReference,
}

impl Error {
    /// Stable short code, used as the prefix of CLI diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyInput => "E_EMPTY",
            Error::InvalidConfig(_) => "E_CONFIG",
            Error::RirShorterThanMixingTime => "E_RIR_LEN",
            Error::SilentRir => "E_RIR_SILENT",
            Error::InsufficientDecay => "E_DECAY_RANGE",
            Error::BandRadius { .. } => "E_BAND_RADIUS",
            Error::ConfigMismatch(_) => "E_CONFIG_MISMATCH",
            Error::ShapeMismatch(_) => "E_SHAPE",
            Error::TooShort(_) => "E_TOO_SHORT",
            Error::NoFreeDecay => "E_NO_DECAY",
            Error::RankDeficientCalibration => "E_CALIBRATION",
            Error::SilentReference => "E_SILENT_REF",
        }
    }
}
