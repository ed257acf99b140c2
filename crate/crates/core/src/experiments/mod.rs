//! The three reproduction experiments and their file outputs.

pub mod config;
mod csv;
mod runs;

use std::path::{Path, PathBuf};

pub use config::{ExperimentConfig, ExperimentKind};
pub use csv::fmt_float;
pub use runs::{run_beampattern, run_music, run_sumrate};

pub const TOOL_NAME: &str = "lwa-sim";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error [{code}]: {message}")]
    Config { code: &'static str, message: String },
    #[error("numerical error: {0}")]
    Numerical(#[from] crate::Error),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    pub fn config(code: &'static str, message: impl Into<String>) -> Self {
        Self::Config {
            code,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 2,
            Self::Numerical(_) => 3,
            Self::Io { .. } => 4,
        }
    }

    /// Short machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Config { code, .. } => code,
            Self::Numerical(_) => "numerical",
            Self::Io { .. } => "io",
        }
    }
}

/// What a run wrote, plus any numerical flags raised along the way. A run
/// with flags still writes its files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub flags: Vec<String>,
}

/// Validates `config` and runs its experiment.
pub fn run(config: &ExperimentConfig) -> Result<RunReport, RunError> {
    config.validate()?;
    let resolved = config.resolved();
    resolved.validate()?;
    match resolved.experiment {
        ExperimentKind::Beampattern => run_beampattern(&resolved),
        ExperimentKind::Sumrate => run_sumrate(&resolved),
        ExperimentKind::Music => run_music(&resolved),
    }
}
