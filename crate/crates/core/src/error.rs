pub type Result<T> = std::result::Result<T, Error>;

/// Failure classes map one-to-one onto the CLI exit codes: parse/schema
/// problems are recoverable input errors, precondition violations are
/// refused operations, numerical failures are diverged or ill-posed
/// computations.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error{}: {msg}", fmt_row(.row))]
    Parse { row: Option<usize>, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

fn fmt_row(row: &Option<usize>) -> String {
    match row {
        Some(r) => format!(" (row {r})"),
        None => String::new(),
    }
}

impl Error {
    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse { row: None, msg: msg.into() }
    }

    pub fn parse_at(row: usize, msg: impl Into<String>) -> Self {
        Error::Parse { row: Some(row), msg: msg.into() }
    }

    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }
}
