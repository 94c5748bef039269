use thiserror::Error;

/// Errors raised by the simulation core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("state vector is empty or has zero norm")]
    ZeroState,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("basis is not unitary (max deviation {0:e})")]
    NotUnitary(f64),
    #[error("invalid CSCO: {0}")]
    InvalidCsco(String),
    #[error("member index {member} out of range ({members} observables)")]
    MemberOutOfRange { member: usize, members: usize },
    #[error("label index {label} out of range ({labels} labels)")]
    LabelOutOfRange { label: usize, labels: usize },
    #[error("negative time step {0}")]
    NegativeTimeStep(f64),
    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),
    #[error("invalid scheduler: {0}")]
    InvalidScheduler(String),
    #[error("time {u} outside ({lo}, {hi}]")]
    OutsideWindow { u: f64, lo: f64, hi: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown CSCO id `{0}`")]
    UnknownCsco(String),
    #[error("time {requested} precedes current time {current}")]
    BackwardTime { requested: f64, current: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;
