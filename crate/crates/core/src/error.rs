use thiserror::Error;

/// Errors raised by the kernels, solvers and simulators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {name} = {value} ({reason})")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("argument out of domain: {0}")]
    Domain(String),

    /// Drift is non-positive: the value function is `V = x` and no barrier exists.
    #[error("trivial case: mu = {mu} <= 0, the value function is V(t, x) = x")]
    TrivialCase { mu: f64 },

    #[error("exponential moment overflows for lambda*sigma*sqrt(t) = {scale}")]
    Overflow { scale: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("boundary invariant violated: {0}")]
    InvalidBoundary(String),

    #[error("no bracket for the boundary at t = {t}: residual {residual_lo} at {lo}, {residual_hi} at {hi}")]
    NoBracket {
        t: f64,
        lo: f64,
        hi: f64,
        residual_lo: f64,
        residual_hi: f64,
    },

    #[error("solved boundary not monotone at t = {t}: {value} exceeds the later value {next}")]
    NonMonotone { t: f64, value: f64, next: f64 },

    #[error("root finder hit {iterations} iterations at t = {t}")]
    RootNotConverged { t: f64, iterations: usize },

    #[error("projected SOR did not converge within {iterations} iterations at time step {step} (residual {residual})")]
    PsorDiverged {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("continuation region reaches x_max = {x_max} at t = {t}")]
    XmaxTooSmall { t: f64, x_max: f64 },

    #[error("extracted boundary increases by {excess} (more than one cell) at t = {t}")]
    NonMonotoneBeyondCell { t: f64, excess: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("wrong surface kind: expected {expected}")]
    WrongSurfaceKind { expected: &'static str },

    #[error("invalid Monte Carlo configuration: {0}")]
    InvalidMcConfig(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("malformed artifact {path}: {message}")]
    Artifact { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
