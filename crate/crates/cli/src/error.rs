use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: dkf_core::Error,
    },

    #[error(transparent)]
    Core(#[from] dkf_core::Error),

    #[error("{0} verification check(s) failed")]
    Verification(usize),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn in_file(path: impl Into<PathBuf>, source: dkf_core::Error) -> Self {
        CliError::File {
            path: path.into(),
            source,
        }
    }

    /// 1 config, 2 data, 3 numeric, 4 verification.
    pub fn exit_code(&self) -> i32 {
        use dkf_core::Error as E;
        let core = match self {
            CliError::Config(_) => return 1,
            CliError::Verification(_) => return 4,
            CliError::File { source, .. } => source,
            CliError::Core(e) => e,
        };
        match core {
            E::Config(_) | E::InvalidArgument(_) => 1,
            E::Parse { .. }
            | E::Validation(_)
            | E::InsufficientData { .. }
            | E::Io(_)
            | E::Alignment(_)
            | E::Dimension(_)
            | E::DegenerateInput(_) => 2,
            _ => 3,
        }
    }
}

/// Attach a path to I/O failures.
pub(crate) fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::in_file(path, dkf_core::Error::Io(e.to_string()))
}
