//! Crate-wide error type.
//!
//! One enum covers all failure classes; the CLI maps variants onto exit
//! codes (config = 2, divergence = 3, budget = 4).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left {left:?} vs right {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("domain violation in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("backward root must be scalar-shaped, got {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },

    #[error("leaf {name} re-registered with a different shape")]
    LeafShape { name: String },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("enumeration budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("{method} is not applicable to {model}")]
    Incompatible { method: String, model: String },

    #[error("invalid support: {0}")]
    InvalidSupport(String),

    #[error("training diverged at iteration {iteration}: |{value:e}| exceeds {limit:e}")]
    Diverged {
        iteration: u64,
        value: f64,
        limit: f64,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("config error at {path}: {detail}")]
    Config { path: String, detail: String },

    #[error("{path}:{line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
