use thiserror::Error;

use crate::block::BlockLayout;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("layout mismatch: expected {expected}, found {found}")]
    LayoutMismatch {
        expected: BlockLayout,
        found: BlockLayout,
    },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    /// The state lies outside the set where the residual is defined
    /// (negative density or pressure, for instance).
    #[error("inadmissible state in cell {cell}: {reason}")]
    Inadmissible { cell: usize, reason: String },

    #[error("singular pivot block on line {line} at position {position}")]
    SingularPivot { line: usize, position: usize },

    #[error("linear operator produced a non-finite output")]
    OperatorNonFinite,

    #[error("nonpositive time step {value} in cell {cell}")]
    NonPositiveTimestep { cell: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub fn is_inadmissible(&self) -> bool {
        matches!(self, Error::Inadmissible { .. })
    }
}
