use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Model(#[from] bdt_core::Error),

    #[error("{variable} = {value}: {source}")]
    Point {
        variable: String,
        value: f64,
        #[source]
        source: bdt_core::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Model(e) | CliError::Point { source: e, .. } => e.kind(),
            CliError::Usage(_) => "Usage",
            CliError::Io { .. } => "Io",
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// `{"error": {"kind": .., "message": ..}}`
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "error": { "kind": self.kind(), "message": self.to_string() } })
    }
}
