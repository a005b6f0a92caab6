use thiserror::Error;

pub type Result<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config key `{key}`: {message}")]
    Config { key: &'static str, message: String },

    #[error("invalid config: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error("fold {fold} is out of range for {count} folds")]
    FoldOutOfRange { fold: usize, count: usize },

    #[error("artifact line {line}: {message}")]
    Artifact { line: usize, message: String },

    #[error("dataset line {line}: {message}")]
    Dataset { line: usize, message: String },

    #[error("{0}")]
    Refused(String),

    #[error(transparent)]
    Core(#[from] cusumrank::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl BenchError {
    pub(crate) fn config(key: &'static str, message: impl Into<String>) -> Self {
        BenchError::Config { key, message: message.into() }
    }
}
