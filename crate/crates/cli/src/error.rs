use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad spec, bad file, bad flag value.
    #[error("{0}")]
    Input(String),

    /// A verified property did not hold.
    #[error("property check failed: {0}")]
    Property(String),

    #[error("infeasible at stage `{stage}`: {reason}")]
    Infeasible { stage: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(implicit_density::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Property(_) => 1,
            CliError::Infeasible { .. } => 3,
            CliError::Core(implicit_density::Error::Numeric(_)) => 1,
            CliError::Input(_) | CliError::Io { .. } | CliError::Core(_) => 2,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<implicit_density::Error> for CliError {
    fn from(e: implicit_density::Error) -> Self {
        match e {
            implicit_density::Error::Infeasible { stage, reason } => CliError::Infeasible { stage, reason },
            other => CliError::Core(other),
        }
    }
}

pub(crate) fn read(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write(path: &std::path::Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}
