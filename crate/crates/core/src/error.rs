use thiserror::Error;

/// Errors produced by construction validation, word handling, and the
/// numerical routines.
#[derive(Debug, Error)]
pub enum MoranError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("invalid word {word:?}: {reason}")]
    InvalidWord { word: Vec<u32>, reason: String },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("axiom violation: {0}")]
    AxiomViolation(String),

    #[error("L^q dimension is undefined at q = 1")]
    UndefinedAtQOne,

    #[error("numerical non-convergence: {0}")]
    NonConvergence(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, MoranError>;
