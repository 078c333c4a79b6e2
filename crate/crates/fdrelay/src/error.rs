use thiserror::Error;

/// Errors surfaced by the simulator.
#[derive(Debug, Error)]
pub enum SimError {
    /// Invalid configuration or incompatible dimensions.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed input data (wrong lengths, bad bit counts).
    #[error("input error: {0}")]
    Input(String),

    /// The adaptive filter left its stable operating region.
    #[error("adaptive filter diverged at iteration {iteration}")]
    Divergence { iteration: u64 },

    /// The normalized error metric has no reference to compare against.
    #[error("error metric undefined: reference channel has zero norm")]
    UndefinedMetric,

    /// A weighted correlation matrix could not be inverted.
    #[error("rank-deficient weighted correlation matrix")]
    RankDeficient,

    /// Statistics requested over an empty sample set.
    #[error("summary requires at least one converged sample")]
    EmptySummary,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl SimError {
    /// Process exit code for the CLI: 2 for configuration problems,
    /// 3 for runtime divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) | SimError::Input(_) | SimError::UndefinedMetric => 2,
            SimError::Divergence { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
