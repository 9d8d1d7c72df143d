use thiserror::Error;

/// Errors raised by the simulator, the learners and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("destination {dest} is not available at waypoint {loc}")]
    UnavailableDestination { dest: usize, loc: usize },

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("calibration infeasible: {0}")]
    CalibrationInfeasible(String),

    #[error("tabular state space too large: {count} states (limit {limit})")]
    StateExplosion { count: usize, limit: usize },

    #[error("no feasible constraint weight: {0}")]
    Infeasible(String),

    #[error("verification failed: {0}")]
    Check(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("scenario parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Toml(_) | Error::Json(_) | Error::Shape { .. } | Error::StateExplosion { .. } => 2,
            Error::CalibrationInfeasible(_) | Error::Infeasible(_) => 3,
            Error::Divergence(_) => 4,
            Error::Check(_) => 5,
            _ => 1,
        }
    }
}
