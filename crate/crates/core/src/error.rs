use thiserror::Error;

/// Errors raised by the numerical pipeline.
///
/// Every variant maps onto one of the CLI exit codes through [`Error::exit_code`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("step size underflow at t = {t} (problem may be stiff)")]
    StepSizeUnderflow { t: f64 },

    #[error("non-finite state encountered; last valid time t = {last_valid_t}")]
    NonFinite { last_valid_t: f64 },

    #[error("system has no Jacobian")]
    MissingJacobian,

    #[error("no limit cycle found: {0}")]
    NoLimitCycle(String),

    #[error("averaging did not converge: gap {gap:e} exceeds tolerance {tol:e}")]
    NonConvergence { gap: f64, tol: f64 },

    #[error("observable is blind to the phase (|average| = {magnitude:e})")]
    PhaseBlind { magnitude: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("Re[s] = {re} is outside the region of convergence Re[s] > {abscissa}")]
    RocViolation { re: f64, abscissa: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("aliasing: {0}")]
    Aliasing(String),

    #[error("linear algebra failure: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) => 2,
            Error::NoLimitCycle(_) => 4,
            Error::DegenerateFit(_) => 5,
            Error::RocViolation { .. } => 6,
            _ => 3,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
