use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema mismatch in column `{column}`: {message}")]
    Schema { column: String, message: String },

    #[error("unseen categorical value `{value}` in column `{column}`")]
    UnseenCategory { column: String, value: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("subgroup label {label} outside 1..={k}")]
    SubgroupOutOfRange { label: usize, k: usize },

    #[error("subgroup {0} has no rows")]
    EmptySubgroup(usize),

    #[error("class {class} has {rows} rows, fewer than the {splits} requested splits")]
    TooFewRows {
        class: usize,
        rows: usize,
        splits: usize,
    },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("exact Shapley enumeration supports at most {max} features, got {features}; use the sampled method")]
    EnumerationBound { features: usize, max: usize },

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numeric failures (divergence, non-finite data) as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Divergence { .. } | Error::NonFinite(_))
    }
}
