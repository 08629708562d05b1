use thiserror::Error;

/// Errors raised by the decoding engine, predictors, analytics and harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("generation length {gen_len} is not divisible by block length {block_len}")]
    NonDivisibleLength { gen_len: usize, block_len: usize },
    #[error("generation length must be at least 1")]
    EmptyGeneration,
    #[error("block length must be at least 1")]
    ZeroBlockLength,
    #[error("block {block} out of range 1..={num_blocks}")]
    BlockOutOfRange { block: usize, num_blocks: usize },
    #[error("position {0} is not masked")]
    PositionNotMasked(usize),
    #[error("position {position} is outside block {block}")]
    PositionOutsideBlock { position: usize, block: usize },
    #[error("invalid selection: {0}")]
    InvalidSelection(String),
    #[error("token id {token} is outside the vocabulary of size {vocab}")]
    TokenOutOfVocab { token: u32, vocab: usize },

    #[error("block {0} has no masked positions")]
    EmptyBlock(usize),
    #[error("predictor unavailable: {0}")]
    PredictorUnavailable(String),
    #[error("malformed predictor response: {0}")]
    MalformedResponse(String),
    #[error("response id {got} does not match request id {expected}")]
    IdMismatch { expected: u64, got: u64 },
    #[error("response does not cover masked position {0}")]
    IncompleteCoverage(usize),
    #[error("protocol mismatch: expected {expected}, server speaks {got}")]
    ProtocolMismatch { expected: String, got: String },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("confidence {0} outside (0, 1]")]
    ConfidenceOutOfRange(f64),

    #[error("empty sample")]
    EmptySample,
    #[error("no calibration records for block {0}")]
    MissingBlock(usize),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid threshold profile: {0}")]
    InvalidProfile(String),

    #[error("no confidence records for block {block}, step {step}")]
    EmptyRecords { block: usize, step: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("zero vector")]
    ZeroVector,
    #[error("need at least {needed} items, got {got}")]
    Arity { needed: usize, got: usize },
    #[error("incomplete trace: {committed} of {gen_len} positions committed")]
    IncompleteTrace { committed: usize, gen_len: usize },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate dataset id {0:?}")]
    DuplicateId(String),
    #[error("{answers} answers for {items} items")]
    ArityMismatch { answers: usize, items: usize },
    #[error("invalid sweep grid: {0}")]
    InvalidGrid(String),
    #[error("reference for {id:?} has {len} tokens, longer than gen_len {gen_len}")]
    ReferenceTooLong { id: String, len: usize, gen_len: usize },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
