use thiserror::Error;

/// Errors raised by the simulation and estimation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sensitivity direction is degenerate (|d| = 0)")]
    DegenerateDirection,

    #[error("ion lost: secular frequency squared {omega_sq:.3e} (rad/s)^2 on axis {axis} is not positive")]
    IonLost { axis: usize, omega_sq: f64 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error("arcsin estimator denominator is zero")]
    ZeroDenominator,

    #[error("arctan2 estimator undefined: both signals are exactly 1/2")]
    Undefined,

    #[error("control-phase settings require even M, got {0}")]
    OddM(u32),

    #[error("bad RPE schedule: {0}")]
    BadSchedule(String),

    #[error("scanned phase wrapped on observable {observable}, electrode {electrode}")]
    RangeOverflow { observable: usize, electrode: usize },

    #[error("matrix is rank deficient")]
    RankDeficient,

    #[error("series too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("no progress: {0}")]
    NoProgress(String),

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
