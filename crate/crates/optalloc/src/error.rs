use thiserror::Error;

/// Errors produced by the design toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("row {row}: {msg}")]
    Validation { row: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown score generator `{0}`")]
    UnknownGenerator(String),

    #[error("infeasible design: {reason} (best achievable: {witness:.6})")]
    Infeasible { reason: String, witness: f64 },

    #[error("dual ascent diverged on constraint `{label}` (lambda = {lambda:.3e}); the design is infeasible or ill-conditioned")]
    Divergence { label: String, lambda: f64 },

    #[error("individual `{id}` has no group label but a fairness constraint requires one")]
    MissingGroup { id: String },

    #[error("unsupported policy file version `{found}` (expected {expected})")]
    Version { found: String, expected: u32 },

    #[error("corrupt policy file: {0}")]
    Corrupt(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate running variable: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
