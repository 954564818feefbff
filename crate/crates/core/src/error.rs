use thiserror::Error;

use crate::model::FullState;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid intensity: {0}")]
    InvalidIntensity(String),

    /// Cumulative-hazard inversion could not bracket the target before the cap.
    #[error("cumulative hazard stays below {target} up to horizon {horizon}")]
    HorizonExceeded { target: f64, horizon: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("customer index {index} out of range for {n} customers")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("moment of order {order} diverges for exponent {k}")]
    DivergentMoment { order: f64, k: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domination broken at state {state:?}: {reason}")]
    DominationBroken { state: FullState, reason: String },

    #[error("no data: {0}")]
    NoData(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error once all context layers are stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self.root(),
            Error::Numeric(_)
                | Error::HorizonExceeded { .. }
                | Error::InvalidIntensity(_)
                | Error::DivergentMoment { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
