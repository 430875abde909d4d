use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("region lies outside the field box")]
    OutOfBounds,
    #[error("cube is not aligned with the grid cells: {0}")]
    Misaligned(String),
    #[error("ball exits the field box")]
    BallOutsideBox,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty family")]
    EmptyFamily,
    #[error("entry condition violated: {0}")]
    EntryCondition(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
