use thiserror::Error;

/// Errors raised by the engine.
///
/// Values are carried as `f64` regardless of the scalar the engine runs on so
/// that the error type stays non-generic.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("domain error: {what} (got {value})")]
    Domain { what: &'static str, value: f64 },

    #[error("operation not supported for the {family} family")]
    UnsupportedFamily { family: &'static str },

    #[error("quadrature did not converge: estimate {estimate}, residual {residual}")]
    Quadrature { estimate: f64, residual: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("model infeasible: {0}")]
    Infeasible(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("path {path}: {source}")]
    AtPath {
        path: usize,
        #[source]
        source: Box<EngineError>,
    },
}

impl EngineError {
    pub(crate) fn domain(what: &'static str, value: impl Into<f64>) -> Self {
        EngineError::Domain {
            what,
            value: value.into(),
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        EngineError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_path(self, path: usize) -> Self {
        EngineError::AtPath {
            path,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, EngineError>;
