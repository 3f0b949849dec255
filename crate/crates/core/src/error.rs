use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("catalog is empty")]
    EmptyCatalog,
    #[error("duplicate weapon id {0}")]
    DuplicateId(usize),
    #[error("weapon ids must be contiguous from 0; missing id {0}")]
    NonContiguousIds(usize),
    #[error("weapon {id} has invalid price {price}")]
    InvalidPrice { id: usize, price: i64 },
    #[error("weapon {id} has invalid quantity limit {limit}")]
    InvalidQuantityLimit { id: usize, limit: i64 },
    #[error("weapon {id}: gun_subtype must be present iff category is gun")]
    SubtypeMismatch { id: usize },
    #[error("unknown weapon id {0}")]
    UnknownWeapon(usize),
    #[error("inventory holds {count} of weapon {id}, above its limit")]
    InventoryOverLimit { id: usize, count: u32 },

    #[error("match {match_id}: schema violation at `{field}`: {detail}")]
    Schema {
        match_id: String,
        field: String,
        detail: String,
    },
    #[error("match {match_id}, round {round}: expected 10 players (5 per side), found {found}")]
    PlayerCountMismatch {
        match_id: String,
        round: u32,
        found: usize,
    },
    #[error("need at least 3 matches to split, got {0}")]
    TooFewMatches(usize),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("{what}: expected {expected} values, got {got}")]
    WrongArity {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("parameter stores differ: {0}")]
    StoreMismatch(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid state input: {0}")]
    InvalidState(String),
    #[error("task has {have} support rounds, need {need}")]
    InsufficientSupport { have: usize, need: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
