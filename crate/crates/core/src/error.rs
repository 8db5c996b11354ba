//! Error type shared across the crate.

/// Errors raised by ingestion, validation, training and evaluation.
#[derive(thiserror::Error, Debug)]
pub enum AuditError {
    /// A row could not be parsed. Carries the 1-based line or record number.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The data violates a dataset invariant (duplicate annotation,
    /// dangling reference, unknown label, ...).
    #[error("schema error: {0}")]
    Schema(String),

    /// A configuration value is out of range or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// Training could not proceed (absent class, non-finite loss, ...).
    #[error("training error: {0}")]
    Train(String),

    /// Evaluation could not proceed (oracle miss, undefined score, ...).
    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, AuditError>;
