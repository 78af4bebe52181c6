use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Fock cutoff {0}: at least 2 levels are required")]
    InvalidCutoff(usize),

    #[error("shape mismatch: expected dimension {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("operator `{0}` is not Hermitian")]
    NotHermitian(String),

    #[error("non-finite entries in `{0}`")]
    NonFinite(String),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error(
        "time step too large: the grid needs at least {required_steps} steps (has {actual_steps})"
    )]
    StepTooLarge {
        required_steps: usize,
        actual_steps: usize,
    },

    #[error("integration failed at t = {time:e} s: {reason}")]
    Integration { time: f64, reason: String },

    #[error("drift matrix is not Hurwitz (max real eigenvalue {max_real:e}); no steady state")]
    NoSteadyState { max_real: f64 },

    #[error("squeeze parameter undefined: G+ ({g_plus:e}) must be smaller than G- ({g_minus:e})")]
    SqueezeUndefined { g_plus: f64, g_minus: f64 },

    #[error("variance never dropped to the zero-point level within the protocol window")]
    NotReached,

    #[error("Krotov update diverged (|dG| = {max_update:e} rad/s); increase lambda")]
    UpdateDiverged { max_update: f64 },

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
