use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("failed to parse scenario: {0}")]
    Parse(String),

    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("link budget cannot close: {0}")]
    Infeasible(String),

    #[error("infeasible geometry `{field}`: {message}")]
    Geometry { field: String, message: String },

    #[error("{stage} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        stage: String,
        iterations: usize,
        residual: f64,
    },

    #[error("i/o failure: {0}")]
    Io(String),

    #[error("{module}: {source}")]
    Context {
        module: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn in_module(self, module: &'static str) -> Self {
        Error::Context {
            module,
            source: Box::new(self),
        }
    }

    /// Strips provenance wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
