use thiserror::Error;

/// Errors raised when an instance violates its invariants or a solver cannot
/// finish.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("instance has no users")]
    NoUsers,

    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{what}[{index}] = {value} is not a valid value ({reason})")]
    InvalidValue {
        what: &'static str,
        index: usize,
        value: f64,
        reason: &'static str,
    },

    #[error("{what} = {value} must be positive and finite")]
    InvalidConstant { what: &'static str, value: f64 },

    #[error("all user powers are zero")]
    AllZeroPower,

    #[error("user {index} has zero power; strip inactive users first")]
    ZeroPower { index: usize },

    #[error("users are not sorted by non-increasing minimal PSD (position {index})")]
    Unsorted { index: usize },

    #[error("limit kind {found} does not match the requested operation (expected {expected})")]
    WrongLimits {
        expected: &'static str,
        found: &'static str,
    },

    #[error("allocation is infeasible: {0}")]
    Infeasible(String),

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("power constraint violated for user {user}: trace gives {found}, expected {expected}")]
    PowerMismatch {
        user: usize,
        expected: f64,
        found: f64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("delay {delay} of user {user} is outside 0..{processing_gain}")]
    DelayOutOfRange {
        user: usize,
        delay: u32,
        processing_gain: u32,
    },

    #[error("inconsistent stream split for user {user}: streams sum to {found}, expected {expected}")]
    InconsistentSplit {
        user: usize,
        expected: f64,
        found: f64,
    },

    #[error("{0} orthogonal streams do not fit in {1} dimensions")]
    TooManyOrthogonal(usize, usize),

    #[error("complement stream {stream} has power {power} above the common level {level}")]
    InfeasibleComplement { stream: usize, power: f64, level: f64 },

    #[error("{what} mismatch: closed form gives {expected}, solver gives {found}")]
    Mismatch {
        what: &'static str,
        expected: f64,
        found: f64,
    },

    #[error("output failed: {0}")]
    Io(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual})")]
    NotConverged { iterations: usize, residual: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
