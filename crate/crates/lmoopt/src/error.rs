use std::path::PathBuf;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid configuration; exit code 2.
    #[error("config error at {field}: {message}")]
    Config { field: String, message: String },
    #[error("run failed: {0}")]
    Runtime(#[from] lmoopt_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Output(String),
}

impl CliError {
    /// Maps a core error raised while interpreting `field` to a config error.
    pub fn config(field: &str) -> impl Fn(lmoopt_core::Error) -> CliError + '_ {
        move |e| CliError::Config {
            field: field.to_string(),
            message: e.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            _ => 1,
        }
    }
}
