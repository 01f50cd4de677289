use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter value was negative, NaN or infinite.
    #[error("value out of domain: {0} (values must be finite and >= 0)")]
    Domain(f64),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("matrix labels do not match")]
    LabelMismatch,

    #[error("invalid weight {0}: weights must be finite and > 0")]
    InvalidWeight(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    /// No two-group division exists because the matrix is symmetric under
    /// an exchange of objects (all entries tied, or an exact tie for the top pair).
    #[error("degenerate symmetry: the similarity matrix admits no unique two-group split")]
    DegenerateSymmetry,

    #[error("matrix did not polarize into two groups ({components} components)")]
    NonPolarized { components: usize },

    #[error("clone did not switch to the target branch below weight {max_weight:e}")]
    NotSwitched { max_weight: f64 },

    #[error("no stored increment for query {query:?}, target {target:?}, delta {delta}, parameter {param:?}")]
    MissingIncrement {
        query: String,
        target: String,
        delta: f64,
        param: String,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line() as usize).unwrap_or_default();
        Error::Parse {
            line,
            message: e.to_string(),
        }
    }
}
