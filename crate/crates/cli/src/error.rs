use thiserror::Error;

/// Process exit codes.
pub const EXIT_IO: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ocae_core::Error),
    #[error(transparent)]
    Monitor(#[from] ocae_monitor::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Data(String),
    #[error("config file: {0}")]
    Config(String),
}

fn core_code(e: &ocae_core::Error) -> i32 {
    match e {
        ocae_core::Error::Io(_) => EXIT_IO,
        ocae_core::Error::Divergence { .. } => EXIT_DIVERGENCE,
        _ => EXIT_DATA,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) | CliError::Monitor(ocae_monitor::Error::Core(e)) => core_code(e),
            CliError::Io(_) | CliError::Monitor(ocae_monitor::Error::Io(_)) => EXIT_IO,
            CliError::Monitor(ocae_monitor::Error::Config(_)) | CliError::Data(_) | CliError::Config(_) => {
                EXIT_DATA
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
