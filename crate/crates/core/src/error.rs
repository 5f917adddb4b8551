use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The scale-function series needs more depth than the evaluator is
    /// allowed to use.
    #[error("series depth {required} required at x = {at} exceeds the cap of {cap}")]
    DepthExceeded { required: usize, cap: usize, at: f64 },

    #[error("ruin certain; no finite wealth achieves a ruin probability below 1")]
    RuinCertain,

    #[error("discount rate must be positive (got {0})")]
    NonPositiveDiscount(f64),

    #[error("variance level {sigma2} outside the feasible interval [{min}, {max}]")]
    InfeasibleVariance { sigma2: f64, min: f64, max: f64 },

    #[error(
        "pool {pool} (fee {fee}): no difficulty reduction in (0, 1] reaches value {target}; \
         attainable range [{low}, {high}]"
    )]
    Calibration {
        pool: usize,
        fee: f64,
        target: f64,
        low: f64,
        high: f64,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Strips any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
