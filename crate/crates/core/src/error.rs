use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("score vector has {got} entries, rubric has {expected} criteria")]
    LengthMismatch { expected: usize, got: usize },

    #[error("score {value} at position {index} is outside [{min}, {max}]")]
    OutOfRange {
        index: usize,
        value: i64,
        min: i32,
        max: i32,
    },

    #[error("invalid rubric: {0}")]
    InvalidRubric(String),

    #[error("invalid item {item_id:?}: {reason}")]
    InvalidItem { item_id: String, reason: String },

    #[error("no unit carries two or more ratings; agreement is undefined")]
    NoPairableUnits,

    #[error("expected disagreement is zero (all pairable values identical); alpha is undefined")]
    DegenerateData,

    #[error("duplicate record for ({item_id:?}, {rater_id:?})")]
    DuplicateRecord { item_id: String, rater_id: String },

    #[error("value {0} is not in the reliability matrix value domain")]
    ValueOutsideDomain(i64),

    #[error(
        "prediction and gold item sets differ ({only_pred} only predicted, {only_gold} only gold)"
    )]
    KeyMismatch { only_pred: usize, only_gold: usize },

    #[error("label {0:?} is not in the label set")]
    UnknownLabel(String),

    #[error("label set is empty")]
    EmptyLabelSet,

    #[error("paraphrase pool is empty")]
    EmptyPool,

    #[error("invalid protected spans: {0}")]
    InvalidSpans(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("input is empty")]
    EmptyInput,

    #[error("prompt slot {0} is missing or empty")]
    MissingSlot(String),

    #[error("found {found} integers, expected {expected}: {raw:?}")]
    TooFewScores {
        expected: usize,
        found: usize,
        raw: String,
    },

    #[error("parsed score {value} is outside [{min}, {max}]: {raw:?}")]
    ScoreOutOfRange {
        value: i64,
        min: i32,
        max: i32,
        raw: String,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: duplicate item id {id:?}")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        id: String,
    },

    #[error("{path}:{line}: duplicate annotation for ({item_id:?}, {rater_id:?})")]
    DuplicateKey {
        path: PathBuf,
        line: usize,
        item_id: String,
        rater_id: String,
    },

    #[error("{path}:{line}: score {value} is outside [{min}, {max}]")]
    RowOutOfRange {
        path: PathBuf,
        line: usize,
        value: i64,
        min: i32,
        max: i32,
    },

    #[error("{path}:{line}: label index {index} not in label file ({len} labels)")]
    UnknownLabelIndex {
        path: PathBuf,
        line: usize,
        index: usize,
        len: usize,
    },

    #[error("endpoint {url} is unreachable: {reason}")]
    EndpointUnreachable { url: String, reason: String },

    #[error("environment variable {0} holding the API key is not set")]
    AuthMissing(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
