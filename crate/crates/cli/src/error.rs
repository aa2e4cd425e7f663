use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    ConfigInvalid(Vec<String>),

    #[error("unknown scenario `{0}`")]
    ScenarioUnknown(String),

    #[error(transparent)]
    Domain(#[from] trapcal_core::Error),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("writing {path}: {message}")]
    Output { path: String, message: String },
}

impl CliError {
    /// Process exit status: 2 for configuration problems, 3 for domain
    /// errors, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid(_) | CliError::ScenarioUnknown(_) => 2,
            CliError::Domain(_) => 3,
            CliError::Io { .. } | CliError::Output { .. } => 1,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }
}
