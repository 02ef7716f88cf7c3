use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Module {
        context: String,
        #[source]
        source: cocycle_lab::Error,
    },
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<cocycle_lab::Error> for HarnessError {
    fn from(source: cocycle_lab::Error) -> Self {
        HarnessError::Module { context: "experiment".into(), source }
    }
}

impl HarnessError {
    pub fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        HarnessError::Io(format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Module { source, .. } if source.is_numeric() => 3,
            HarnessError::Module { .. } => 2,
            HarnessError::Io(_) => 1,
        }
    }

    pub fn category(&self) -> &'static str {
        match self.exit_code() {
            2 => "config",
            3 => "numeric",
            _ => "io",
        }
    }

    /// Machine-readable form written to stderr by the CLI.
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "error": {
                "category": self.category(),
                "exit_code": self.exit_code(),
                "message": self.to_string(),
            }
        })
    }
}

/// Attaches experiment context to module errors.
pub trait Context<T> {
    fn context(self, what: &str) -> Result<T, HarnessError>;
}

impl<T> Context<T> for Result<T, cocycle_lab::Error> {
    fn context(self, what: &str) -> Result<T, HarnessError> {
        self.map_err(|source| HarnessError::Module { context: what.to_string(), source })
    }
}
