use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("output {} already exists and is not empty", .0.display())]
    OutputExists(PathBuf),
    #[error(transparent)]
    Core(#[from] projspec::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit status: 2 for unusable inputs or configuration, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingInput(_) | CliError::Config(_) => 2,
            CliError::Core(projspec::Error::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => 2,
            CliError::Core(projspec::Error::Parse(_) | projspec::Error::InvalidGrid(_)) => 2,
            _ => 1,
        }
    }
}
