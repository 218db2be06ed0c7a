use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("fold {fold} too short to embed: {len} samples, need at least {needed}")]
    FoldTooShort { fold: usize, len: usize, needed: usize },

    #[error("class {0} missing from training split")]
    MissingClass(usize),

    #[error("label {label} out of range 1..={classes}")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("training aborted: {0}")]
    Diverged(String),

    #[error("missing data for link {from}->{to}")]
    MissingLink { from: usize, to: usize },

    #[error("unknown link: {0}")]
    UnknownLink(String),

    #[error("simulation diverged at t={t:.3}s: {reason}")]
    SimulationDiverged { t: f64, reason: String },

    #[error("pipeline component missing: {0}")]
    MissingComponent(&'static str),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
