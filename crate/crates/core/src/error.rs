use alloc::string::String;

use crate::arch::ArchPoint;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown block kind `{0}`")]
    UnknownBlockKind(String),
    #[error("incompatible network specification: {0}")]
    IncompatibleSpec(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("empty data")]
    EmptyData,
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged { epoch: usize },
    #[error("split infeasible: {0}")]
    SplitInfeasible(String),
    #[error("batch of {requested} exceeds the {available} available items")]
    BatchTooLarge { requested: usize, available: usize },
    #[error("label of sample {0} has not been revealed")]
    Unrevealed(usize),
    #[error("malformed probabilities: {0}")]
    MalformedProbabilities(String),
    #[error("architecture {0} lies outside the search grid")]
    OutsideGrid(ArchPoint),
    #[error("budget {m} outside the curve range [{first}, {last}]")]
    CurveRange { m: f64, first: f64, last: f64 },
    #[error("passive learning curve has zero area")]
    ZeroPassiveAuc,
    #[error("curves do not share the same label grid")]
    MismatchedGrids,
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
