use thiserror::Error;

use crate::{Day, ExpertId};

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),
    #[error("invalid stream parameter: {0}")]
    InvalidParameter(String),
    #[error("day {day} outside [1, {horizon}]")]
    DayOutOfRange { day: Day, horizon: Day },
    #[error("expert {id} outside [1, {n}]")]
    ExpertOutOfRange { id: ExpertId, n: usize },
    #[error("uncommitted round {0}: commit a distribution before querying losses")]
    UncommittedRound(Day),
    #[error("not a probability distribution: {0}")]
    NotADistribution(String),
    #[error("brute-force guard exceeded: {0}")]
    GuardExceeded(String),
    #[error("loss file {path}: {message}")]
    MalformedFile { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("empty expert set")]
    EmptyExpertSet,
    #[error("duplicate expert id {0}")]
    DuplicateId(String),
    #[error("expert {0} is not tracked")]
    NotTracked(String),
    #[error("expert {0} is already tracked")]
    AlreadyTracked(String),
    #[error("cannot remove the last tracked expert")]
    LastExpert,
    #[error("loss {loss} outside [{lo}, {hi}]")]
    LossOutOfRange { loss: f64, lo: f64, hi: f64 },
    #[error("expected {expected} losses, got {got}")]
    LossCount { expected: usize, got: usize },
    #[error("out-of-order day: expected {expected}, got {got}")]
    OutOfOrderDay { expected: Day, got: Day },
    #[error("day {0} is past the horizon")]
    PastHorizon(Day),
    #[error("no decision for the current day; call begin_day and choose first")]
    NoDecision,
    #[error("day {0} not resolved yet")]
    Unresolved(Day),
    #[error("meter release of {requested} words exceeds balance {balance} in {category}")]
    NegativeBalance {
        category: &'static str,
        requested: u64,
        balance: u64,
    },
    #[error(transparent)]
    Stream(#[from] StreamError),
}
