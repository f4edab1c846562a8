use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, FanError>;

#[derive(Debug, thiserror::Error)]
pub enum FanError {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    TrainingDiverged { epoch: usize },

    #[error("brute-force search refused: {n} samples exceeds the cap of {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("solver stopped after {nodes} nodes without an integer-feasible point")]
    SolverLimit { nodes: usize },

    #[error("unsupported model document: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FanError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        FanError::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FanError::Io {
            path: path.into(),
            source,
        }
    }
}
