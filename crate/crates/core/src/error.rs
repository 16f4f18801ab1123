use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid layout: {0}")]
    Layout(String),

    #[error("structural error: {0}")]
    Structure(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("divergence at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error("degenerate prior: {0}")]
    DegeneratePrior(String),

    #[error("Gram matrix of size {size} not positive definite after jitter {max_jitter:e}")]
    IllConditioned { size: usize, max_jitter: f64 },

    #[error("Bayesian optimization step {step}: {source}")]
    BoStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint version {found} not supported (expected {expected})")]
    CheckpointVersion { found: u8, expected: u8 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
