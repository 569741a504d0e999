//! Crate-wide error type. Configuration problems are kept distinct from
//! runtime failures so the CLI can map them to different exit codes.

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch, {lhs} vs {rhs}")]
    ShapeMismatch {
        op: &'static str,
        lhs: String,
        rhs: String,
    },

    #[error("{op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },

    #[error("backward requires a scalar output, got [{rows}, {cols}]")]
    NonScalarBackward { rows: usize, cols: usize },

    #[error("fft: {0}")]
    Fft(String),

    #[error("csv line {line}: {reason}")]
    CsvParse { line: usize, reason: String },

    #[error("graph: {0}")]
    Graph(String),

    #[error("training diverged: loss is NaN at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },

    #[error("evaluation: {0}")]
    Eval(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad configuration rather than a failure at
    /// runtime; the CLI exits 2 for these and 1 otherwise.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
