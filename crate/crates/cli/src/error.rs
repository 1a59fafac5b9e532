use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

/// Error reported on stderr as `{code, message, context}`.
#[derive(Debug, Clone, Serialize, thiserror::Error)]
#[error("{code}: {message}")]
pub struct CliError {
    pub code: String,
    pub message: String,
    pub context: BTreeMap<String, String>,
}

impl CliError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.to_string(),
            message: message.into(),
            context: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.context.insert(key.to_string(), value.into());
        self
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new("internal", message)
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("config", message)
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new("io", format!("{}: {e}", path.display())).with("path", path.display().to_string())
    }

    /// A required input file is absent.
    pub fn missing_path(what: &str, path: &Path) -> Self {
        Self::new("missing_path", format!("{what} `{}` does not exist", path.display()))
            .with("path", path.display().to_string())
            .with("role", what)
    }
}

impl From<spdest::Error> for CliError {
    fn from(e: spdest::Error) -> Self {
        let mut out = CliError::new(e.code(), e.to_string());
        match &e {
            spdest::Error::Io { path, .. } | spdest::Error::Csv { path, .. } => {
                out = out.with("path", path.display().to_string());
            }
            spdest::Error::MissingCovariate { column, line } | spdest::Error::NonNumeric { column, line, .. } => {
                out = out.with("column", column.clone()).with("line", line.to_string());
            }
            spdest::Error::MissingColumn(c) => out = out.with("column", c.clone()),
            _ => {}
        }
        out
    }
}
