use std::path::PathBuf;

use csav::harness::HarnessError;
use thiserror::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_ASSERTION: u8 = 1;
pub const EXIT_DIVERGED: u8 = 2;
pub const EXIT_VALIDATION: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{context} ({path}): {source}")]
    Io {
        context: &'static str,
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("numerical divergence: {0}")]
    Diverged(String),
}

impl CliError {
    pub fn io(context: &'static str, path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { context, path, source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io { .. } => EXIT_IO,
            CliError::Diverged(_) => EXIT_DIVERGED,
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        if e.is_divergence() {
            return CliError::Diverged(e.to_string());
        }
        match e {
            HarnessError::Io(source) => CliError::Io {
                context: "harness i/o",
                path: PathBuf::new(),
                source,
            },
            HarnessError::Integrator(ref inner) if matches!(inner, csav::IntegratorError::SingularSplitting { .. }) => {
                CliError::Diverged(e.to_string())
            }
            other => CliError::Validation(other.to_string()),
        }
    }
}
