use thiserror::Error;

/// Errors raised by the analysis and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function being evaluated.
    #[error("domain error: {0}")]
    Domain(String),

    /// A delayed lookup reached further back than the stored history.
    #[error("history underflow: lookup at t={requested} but history starts at t={available}")]
    HistoryUnderflow { requested: f64, available: f64 },

    /// The network shape does not fit the requested operation.
    #[error("topology error: {0}")]
    Topology(String),

    /// Root bracketing failed because the upper end does not change sign.
    #[error("bracket error: f({hi}) = {value} is not negative")]
    Bracket { hi: f64, value: f64 },

    /// κ·T̄·f(0) must stay below one for the stability constants to exist.
    #[error("gain too large: kappa*Tbar*f(0) = {0} >= 1")]
    GainTooLarge(f64),

    /// The bound recursion failed to contract although the sufficient condition holds.
    #[error("bound recursion is not contractive: gamma = {gamma} with theorem lhs = {lhs}")]
    NonContractive { gamma: f64, lhs: f64 },

    /// A simulation configuration violates its preconditions.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input that is not well-formed (JSON syntax, unknown keys, wrong types).
    #[error("parse error: {0}")]
    Parse(String),

    /// Reading or writing a file failed.
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },

    /// A model or scenario invariant is violated. `path` names the offending field.
    #[error("{path}: {message}")]
    Validation { path: String, message: String },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Errors caused by user input rather than by the toolkit itself.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Parse(_) | Error::Io { .. } | Error::Validation { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
