use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("initial region: {0}")]
    InitRegion(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("training aborted at episode {episode}: {source}")]
    TrainingAborted {
        episode: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("degenerate sample pool: {0}")]
    DegeneratePool(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
