use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("iteration limit reached after {iterations} iterations (last residual {residual:e})")]
    IterationLimit { iterations: usize, residual: f64 },

    #[error("unsupported size: {0}")]
    UnsupportedSize(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Raised when a Lyapunov operator has an eigenvalue with non-positive real part.
    #[error("unstable operator: eigenvalue with real part {min_real_part:e} <= 0 (regime is not (a))")]
    Stability { min_real_part: f64 },

    #[error("limit generating matrix is not balanced: {0}")]
    NotBalanced(String),

    #[error("balance violation: column mean sums differ ({0})")]
    Balance(String),

    #[error("singular ratio map: {0}")]
    Singularity(String),

    #[error("urn extinction at step {step}: total weight is zero")]
    Extinction { step: u64 },

    #[error("tenability violation at step {step}: component {component} would become {value}")]
    Tenability {
        step: u64,
        component: usize,
        value: f64,
    },

    #[error("enumeration refused: {0}")]
    SizeGuard(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
