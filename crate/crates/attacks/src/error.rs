pub type Result<T, E = AttackError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum AttackError {
    #[error(transparent)]
    Provider(#[from] sbpm_provider::Error),
    #[error(transparent)]
    Core(#[from] sbpm_core::Error),
    #[error("call budget of {0} exhausted")]
    BudgetExhausted(u64),
    #[error("no padding record passed all tests after {0} candidates")]
    NoValidPadding(usize),
    #[error("no base sample passed all tests after {0} attempts")]
    BaseNeverPasses(usize),
    #[error("distance extraction failed: {0}")]
    Extraction(String),
    #[error("invalid attack configuration: {0}")]
    Config(String),
    #[error("no targets to evaluate against")]
    NoTargets,
}
