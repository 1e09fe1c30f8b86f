use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrecsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The conditional state is undefined where the ECS density vanishes.
    #[error("degenerate point: chi = {chi:e} is below the evaluation threshold")]
    DegeneratePoint { chi: f64 },

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("oracle space too large: n_max = {n_max} exceeds 4096, reduce g/nu")]
    TooLarge { n_max: usize },

    #[error("not decohered: contested mass {contested:.4} exceeds {limit}")]
    NotDecohered { contested: f64, limit: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for PrecsError {
    fn from(e: std::io::Error) -> Self {
        PrecsError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, PrecsError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(PrecsError::InvalidArgument(msg.into()))
}
