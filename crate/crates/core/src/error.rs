use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("matrix is singular within tolerance (reciprocal condition {rcond:.3e}){}", context_suffix(.context))]
    Singular { rcond: f64, context: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("eps = {eps} above transform threshold for mode {mode}: {detail}")]
    Convergence { mode: usize, eps: f64, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("inadmissible signal: {0}")]
    Signal(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("i/o error: {0}")]
    Io(String),
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" in {context}")
    }
}

impl Error {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Attach a location (e.g. `modes[1].P`) to a singularity error.
    pub fn in_context(self, ctx: impl Into<String>) -> Self {
        match self {
            Error::Singular { rcond, .. } => Error::Singular {
                rcond,
                context: ctx.into(),
            },
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
