use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("value out of schema in row {row}, column {column}: {reason}")]
    OutOfSchema {
        row: usize,
        column: usize,
        reason: String,
    },

    #[error("csv parse error at line {line}, column {column}: {reason}")]
    Parse {
        line: usize,
        column: usize,
        reason: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not enough rows: need at least {needed}, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
