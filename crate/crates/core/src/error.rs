use std::io;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum ScopeError {
    /// An argument violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration struct failed validation. `field` names the offending knob.
    #[error("invalid config `{field}`: {reason}")]
    Config { field: &'static str, reason: String },

    /// Bad magic, unsupported version, or an otherwise unparseable header.
    #[error("format error: {0}")]
    Format(String),

    /// The file ended early or contained invalid values.
    #[error("corrupt data at byte {offset}: {reason}")]
    Corruption { offset: u64, reason: String },

    #[error("training failed at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },

    #[error("cannot tokenize character {ch:?} at position {position}")]
    Tokenization { ch: char, position: usize },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = ScopeError> = std::result::Result<T, E>;

impl ScopeError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        ScopeError::Domain(msg.into())
    }

    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        ScopeError::Config {
            field,
            reason: reason.into(),
        }
    }
}
