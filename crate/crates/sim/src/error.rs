use std::path::PathBuf;

/// Errors surfaced by the harness and the command-line tool.
#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] bcdiff_core::Error),
    #[error("{diverged} of {trials} trials diverged for algorithm '{label}'")]
    Diverged {
        label: String,
        diverged: usize,
        trials: usize,
    },
}

impl SimError {
    /// Process exit code: 2 for configuration problems, 3 for divergence or
    /// instability, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) | SimError::Parse(_) | SimError::Read { .. } => 2,
            SimError::Diverged { .. } | SimError::Core(bcdiff_core::Error::Unstable { .. }) => 3,
            SimError::Core(
                bcdiff_core::Error::InvalidParameter(_)
                | bcdiff_core::Error::NonPositiveVariance { .. }
                | bcdiff_core::Error::DimensionMismatch { .. }
                | bcdiff_core::Error::Disconnected { .. },
            ) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
