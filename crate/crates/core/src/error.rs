use thiserror::Error;

/// Errors raised by the model, samplers and diagnostics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Inputs violate a documented precondition (shapes, ranges, labels).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The posterior precision of a cluster regression failed to factor.
    #[error("singular model: {0}")]
    SingularModel(String),

    /// A closed-form quantity left its domain (b* <= 0, non-finite log density, ...).
    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    /// Every particle received zero weight at the given observation.
    #[error("particle system degenerated at observation {step}")]
    ParticleDegeneracy { step: usize },

    /// Two label vectors (or tables) had different lengths.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// Exhaustive label alignment is limited to a small number of components.
    #[error("exhaustive alignment supports at most {max} components, got {k}")]
    TooManyComponents { k: usize, max: usize },

    /// A price series is too short for the requested statistic.
    #[error("series of length {len} is shorter than the required {min}")]
    InsufficientLength { len: usize, min: usize },

    /// A ratio statistic has a zero denominator (flat prices, zero-variance pnl).
    #[error("undefined statistic: {0}")]
    Undefined(String),

    /// The chain failed at a given iteration.
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for failures caused by floating-point degeneracy rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SingularModel(_) | Error::Degenerate(_) | Error::ParticleDegeneracy { .. } => true,
            Error::AtIteration { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
