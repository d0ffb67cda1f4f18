use std::path::PathBuf;

/// Process exit codes of the `nuce-lab` binary.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CHECK_FAILED: i32 = 1;
    pub const INPUT: i32 = 2;
    pub const DATA: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("{}: missing column(s): {columns}", path.display())]
    MissingColumns { path: PathBuf, columns: String },
    #[error("{}: line {line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: file has no data rows", path.display())]
    EmptyFile { path: PathBuf },
    #[error("gradient check failed: {0}")]
    CheckFailed(String),
    #[error(transparent)]
    Core(#[from] nuce_core::Error),
}

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::CheckFailed(_) => exit::CHECK_FAILED,
            Self::Io { .. }
            | Self::Config(_)
            | Self::MissingColumns { .. }
            | Self::Parse { .. } => exit::INPUT,
            Self::Core(nuce_core::Error::Config(_)) => exit::INPUT,
            Self::EmptyFile { .. } | Self::Core(_) => exit::DATA,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
