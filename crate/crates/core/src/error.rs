use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("input is not valid UTF-8 (first bad byte at offset {offset})")]
    Encoding { offset: usize },
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid sentence {id}: {reason}")]
    InvalidSentence { id: String, reason: String },
    #[error("sentence {id}: type {type_label:?} is not in the inventory")]
    UnknownType { id: String, type_label: String },
    #[error("duplicate sentence id {id} in split {split}")]
    DuplicateId { split: String, id: String },
    #[error("duplicate split name {0}")]
    DuplicateSplit(String),
    #[error("type inventory is empty")]
    EmptyInventory,
    #[error("duplicate type name {0:?}")]
    DuplicateType(String),
    #[error("invalid type name {0:?}")]
    InvalidTypeName(String),
    #[error("cannot sample from an empty split")]
    EmptySplit,
    #[error("sampling fraction {0} is outside (0, 1]")]
    InvalidFraction(f64),
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("target type {0:?} has no mapping entry")]
    UnmappedType(String),
}

#[derive(Debug, Error)]
pub enum AlignmentError {
    #[error("sentence id {0} present in only one of pseudo/gold")]
    IdMismatch(String),
    #[error("tau {0} is outside [0, 1]")]
    InvalidTau(f64),
    #[error("no gold entities to align")]
    NoVotes,
    #[error("invalid mapping file: {0}")]
    InvalidMapping(String),
}

#[derive(Debug, Error, Clone)]
pub enum TransportError {
    #[error("request failed after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("sentence id {0} present in only one of predictions/gold")]
    IdMismatch(String),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<EvalError>,
    },
    #[error("duplicate stage name {0}")]
    DuplicateStage(String),
    #[error("a continual-learning curve needs at least 2 snapshots, got {0}")]
    TooFewStages(usize),
}
