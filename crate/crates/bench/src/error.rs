use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] noisy_coreset::Error),
}

impl BenchError {
    /// 1 invalid config, 2 data error, 3 internal failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 1,
            BenchError::Io { .. } | BenchError::Csv { .. } | BenchError::Data(_) => 2,
            BenchError::Core(noisy_coreset::Error::InvalidInput(_)) => 1,
            BenchError::Core(noisy_coreset::Error::DimensionMismatch { .. }) => 2,
            BenchError::Core(noisy_coreset::Error::Construction { .. }) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
