use std::path::Path;

use reverb_match::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{0}")]
    Io(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("{0}")]
    Multichannel(String),
    #[error("unsupported sample rate {0} Hz")]
    UnsupportedSampleRate(u32),
    #[error("resampler: {0}")]
    Resample(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("json: {0}")]
    Json(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn wav(path: &Path, err: hound::Error) -> Self {
        match err {
            hound::Error::IoError(e) => CliError::Io(format!("{}: {e}", path.display())),
            hound::Error::Unsupported => CliError::UnsupportedFormat(path.display().to_string()),
            other => CliError::UnsupportedFormat(format!("{}: {other}", path.display())),
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Io(_) => "E_IO",
            CliError::UnsupportedFormat(_) => "E_WAV_FORMAT",
            CliError::Multichannel(_) => "E_MULTICHANNEL",
            CliError::UnsupportedSampleRate(_) => "E_SAMPLE_RATE",
            CliError::Resample(_) => "E_RESAMPLE",
            CliError::Manifest(_) => "E_MANIFEST",
            CliError::Json(_) => "E_JSON",
            CliError::Usage(_) => "E_USAGE",
        }
    }

    /// Process exit code.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}
