use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid base matrix: {0}")]
    InvalidBase(String),
    #[error("nonpositive design rate: n_v = {n_v}, n_c = {n_c}")]
    NonpositiveRate { n_v: usize, n_c: usize },
    #[error("rate {0} outside [0, 1]")]
    RateOutOfRange(String),
    #[error("invalid spreading: {0}")]
    InvalidSpreading(String),
    #[error("termination factor L = {0} must be at least 2")]
    TerminationTooShort(usize),
    #[error("threshold {threshold} above capacity {capacity}")]
    ThresholdAboveCapacity { threshold: f64, capacity: f64 },
    #[error("undecodable at zero erasure")]
    UndecodableAtZero,
    #[error("edge fraction {0} outside [0, 1]")]
    FractionOutOfRange(f64),
    #[error("no crossing in range")]
    NoCrossing,
    #[error("lift factor {n} below multiplicity {max_entry}")]
    LiftBelowMultiplicity { n: usize, max_entry: u32 },
    #[error("failed to sample disjoint permutations for block ({row}, {col})")]
    PermutationSampling { row: usize, col: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
