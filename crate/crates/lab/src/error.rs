use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] reachdim_core::Error),
}

pub type LabResult<T> = Result<T, LabError>;

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for configuration problems and rejected arguments, 3 for numerical divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Core(reachdim_core::Error::InvalidArgument(_))
            | Self::Core(reachdim_core::Error::Dimension { .. }) => 2,
            Self::Core(reachdim_core::Error::Diverged { .. }) => 3,
            _ => 1,
        }
    }
}

macro_rules! config_err {
    ($($arg:tt)*) => {
        $crate::error::LabError::Config(format!($($arg)*))
    };
}
pub(crate) use config_err;
