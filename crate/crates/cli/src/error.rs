use std::path::PathBuf;

use lmtp::ErrorKind;

/// Exit code for invalid arguments or configuration.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for data that cannot be read or fails validation.
pub const EXIT_DATA: i32 = 3;
/// Exit code for estimation failures.
pub const EXIT_ESTIMATION: i32 = 4;
/// Exit code when results cannot be written.
pub const EXIT_OUTPUT: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] lmtp::Error),

    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Config => EXIT_CONFIG,
                ErrorKind::Data => EXIT_DATA,
                ErrorKind::Estimation => EXIT_ESTIMATION,
            },
            CliError::Output { .. } => EXIT_OUTPUT,
        }
    }
}
