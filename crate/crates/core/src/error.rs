use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad arguments, dimension mismatches, malformed config or schedule strings.
    #[error("usage error: {0}")]
    Usage(String),

    /// Inputs outside the mathematical domain (non-finite coordinates, invalid matrices).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// An iterate left the finite range or crossed the divergence threshold.
    #[error("iterate diverged at t={t}: coordinate {index} = {value:e}")]
    Diverged { t: usize, index: usize, value: f64 },

    #[error("non-finite iterate at t={t}, coordinate {index}")]
    NonFinite { t: usize, index: usize },

    /// A trace or file lacks the data an operation needs.
    #[error("data error: {0}")]
    Data(String),

    /// The operation does not apply to the given schedule or problem.
    #[error("inapplicable: {0}")]
    Inapplicable(String),

    /// A rate fit whose window contains an exactly solved iterate.
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Diverged { .. } | Error::NonFinite { .. })
    }
}
