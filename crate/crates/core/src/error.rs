use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("the non-smooth part has no proximal map")]
    NoProx,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite state at iteration {iteration} (last finite norm {last_norm:.6e})")]
    NonFinite { iteration: usize, last_norm: f64 },

    #[error("chain {chain}: {source}")]
    Chain { chain: usize, source: Box<Error> },

    #[error("grid measure is empty: no weight inside the box")]
    EmptyMeasure,

    #[error("measure is not normalized (total mass {0})")]
    Unnormalized(f64),

    #[error("grids differ")]
    GridMismatch,

    #[error("need at least {needed} observations, have {have}")]
    TooFewObservations { needed: u64, have: u64 },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
