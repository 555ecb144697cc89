//! Crate-wide error type and result alias.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A line of a JSONL file failed to parse as JSON.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A record parsed but violated a schema invariant. `field` names the
    /// offending field; `line` is set when the record came from a file.
    #[error("validation error{}: field `{field}`: {message}", line_suffix(*.line))]
    Validation {
        line: Option<usize>,
        field: String,
        message: String,
    },

    /// An argument outside an operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A split protocol could not be constructed from the given corpus.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Training aborted (non-finite loss or similar divergence).
    #[error("training error: {0}")]
    Training(String),

    /// A manifest or model config file was malformed or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// A checkpoint file could not be read back.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

fn line_suffix(line: Option<usize>) -> String {
    match line {
        Some(n) => format!(" at line {n}"),
        None => String::new(),
    }
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn validation(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Validation {
            line: None,
            field: field.into(),
            message: msg.into(),
        }
    }

    /// Attach a line number to a validation or parse error coming from a file.
    pub fn at_line(self, line: usize) -> Self {
        match self {
            Error::Validation { field, message, .. } => Error::Validation {
                line: Some(line),
                field,
                message,
            },
            other => other,
        }
    }
}
