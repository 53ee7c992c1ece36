use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    /// Operand shapes do not conform for the named op.
    #[error("dimension error in {op}: shapes {shapes:?}")]
    Dimension { op: &'static str, shapes: Vec<Vec<usize>> },
    /// A precondition of the call was violated.
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;
