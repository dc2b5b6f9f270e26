use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("gradient tape does not belong to this network (stale or mismatched)")]
    StaleTape,

    #[error("network architectures differ: {0:?} vs {1:?}")]
    ArchitectureMismatch(Vec<usize>, Vec<usize>),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: String },

    #[error("coincident positions: collision direction is undefined")]
    CoincidentPositions,

    #[error("non-finite world state at step {step}: {detail}")]
    NonFiniteState { step: usize, detail: String },

    #[error("replay buffer has {available} eligible transitions, {requested} requested")]
    UnderFilled { requested: usize, available: usize },

    #[error("transition schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("truncated episode log: expected {expected} records, got {got}")]
    TruncatedLog { expected: usize, got: usize },

    #[error("unknown preset `{name}`; available presets: {}", available.join(", "))]
    UnknownPreset { name: String, available: Vec<String> },

    #[error("empty batch")]
    EmptyBatch,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
