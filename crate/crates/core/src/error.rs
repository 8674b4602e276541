use std::path::PathBuf;

use deftan_numerics::NumericsError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("input too short: {len} samples, need at least {needed}")]
    InputTooShort { len: usize, needed: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("checkpoint parse error at byte {offset}: {detail}")]
    CheckpointParse { offset: usize, detail: String },
    #[error("checkpoint incompatible: file digest {found}, expected {expected}")]
    Incompatible { expected: String, found: String },
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad configuration or arguments rather than
    /// the environment.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Input(_)
                | Error::Geometry(_)
                | Error::InputTooShort { .. }
                | Error::Incompatible { .. }
                | Error::Numerics(NumericsError::Config { .. })
        )
    }
}
