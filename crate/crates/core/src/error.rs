use crate::tree::VertexId;

/// Errors raised by tree construction and the weight calculus.
#[derive(Debug, thiserror::Error)]
pub enum FlowError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("truncation has {count} vertices, cap is {cap}")]
    TooLarge { count: u128, cap: usize },

    /// A trapezoid, envelope or confluent does not fit inside the truncation.
    #[error("window too small: {0}")]
    WindowTooSmall(String),

    #[error("flow condition violated at vertex {0}")]
    FlowViolation(VertexId),

    /// The inputs do not satisfy the precondition of the statement being checked.
    #[error("inapplicable: {0}")]
    Inapplicable(String),

    #[error("enumeration window is empty")]
    EmptyWindow,

    #[error("floating range exceeded: {0}")]
    Numeric(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FlowError>;

pub(crate) fn invalid(msg: impl Into<String>) -> FlowError {
    FlowError::InvalidArgument(msg.into())
}
