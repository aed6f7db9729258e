use thiserror::Error;

/// Errors produced anywhere in the filtering stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {requested}: {reason}")]
    UnsupportedDimension { requested: usize, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid kernel spec: {0}")]
    InvalidSpec(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("simulation diverged at step {step}: {what}")]
    SimulationDiverged { step: usize, what: String },

    #[error("non-finite {what} at evaluation point")]
    NonFiniteEvaluation { what: &'static str },

    #[error("all weights are zero (log-weights all -inf)")]
    DegenerateWeights,

    #[error("filter collapsed at step {step}: all weights vanished")]
    FilterCollapse { step: usize },

    #[error("restart aborted at step {step}: non-finite estimate")]
    RestartAborted { step: usize },

    #[error("filter initialization failed: {0}")]
    Initialization(String),

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("operator cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            e @ (Error::FilterCollapse { .. } | Error::RestartAborted { .. } | Error::AtStep { .. }) => e,
            other => Error::AtStep {
                step,
                source: Box::new(other),
            },
        }
    }

    /// True for errors that come from user-supplied configuration rather
    /// than from a numerical failure at run time.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidSpec(_) | Error::UnsupportedDimension { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
