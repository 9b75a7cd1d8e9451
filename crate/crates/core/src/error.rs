use thiserror::Error;

pub type Result<T, E = MrfError> = std::result::Result<T, E>;

/// Errors raised while building models or running solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MrfError {
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A unary term sits on a node with no incident edge, so it cannot be
    /// folded into a pairwise table.
    #[error("unsupported model: node {node} has a unary term but no incident edge")]
    UnaryOnIsolatedNode { node: usize },

    #[error("degenerate node {node}: {reason}")]
    DegenerateNode { node: usize, reason: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl MrfError {
    /// True for the errors a caller can only fix by changing the model.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            MrfError::DegenerateNode { .. } | MrfError::UnaryOnIsolatedNode { .. }
        )
    }
}

/// What went wrong while reading a UAI file.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("expected MARKOV header, found {0:?}")]
    NotMarkov(String),
    #[error("factor arity {0} is not supported (only 1 or 2)")]
    UnsupportedArity(usize),
    #[error("unexpected end of input")]
    Truncated,
    #[error("expected a number, found {0:?}")]
    NotNumeric(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    pub(crate) fn new(line: usize, kind: ParseErrorKind) -> Self {
        ParseError { line, kind }
    }
}
