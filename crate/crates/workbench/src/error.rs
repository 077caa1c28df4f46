pub type Result<T, E = WorkbenchError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum WorkbenchError {
    #[error(transparent)]
    Core(#[from] sbpm_core::Error),
    #[error(transparent)]
    Provider(#[from] sbpm_provider::Error),
    #[error(transparent)]
    Attack(#[from] sbpm_attacks::AttackError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot parse config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(WorkbenchError::Config(msg.into()))
}
