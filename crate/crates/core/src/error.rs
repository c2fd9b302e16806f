use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Electrostatic model cannot be evaluated (e.g. energy unbounded below).
    #[error("model error: {0}")]
    Model(String),

    #[error("loading error on DQD {dqd}: {reason}")]
    Loading { dqd: usize, reason: String },

    /// Density matrix failed a validity check.
    #[error("invalid spin state: {0}")]
    State(String),

    #[error("initialization failed after {attempts} herald attempts")]
    Initialization { attempts: u32 },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("analysis error: {0}")]
    Analysis(String),

    /// A least-squares fit did not converge.
    #[error("fit did not converge: {fit} (residual norm {residual:.3e})")]
    NonConvergence { fit: String, residual: f64 },

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
