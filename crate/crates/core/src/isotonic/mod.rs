//! Exact weighted isotonic regression over partial orders.

mod interpolate;
mod partition;
pub(crate) mod pava;
mod poset;
mod solve;

pub use interpolate::interpolate;
pub use poset::{build_poset, ConstraintGraph, DesignPoint, DesignPoset};
pub use solve::{solve_chain, solve_partial_order, IsotonicProblem, IsotonicSolution};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IsotonicError {
    #[error("design points {first} and {second} coincide")]
    DuplicateDesignPoint { first: usize, second: usize },
    #[error("point {index} has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize, index: usize },
    #[error("design point has no coordinates")]
    EmptyPoint,
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("{what} has length {found}, expected {expected}")]
    LengthMismatch { what: &'static str, expected: usize, found: usize },
    #[error("index {index} out of range for {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("weights must be finite and non-negative")]
    NegativeWeight,
    #[error("invalid merge: {0}")]
    InvalidMerge(&'static str),
    #[error("constraint graph is not a chain")]
    NotAChain,
    #[error("chain solver needs strictly positive weights")]
    NonPositiveChainWeight,
    #[error("problem has no node with positive weight")]
    NoActiveNodes,
    #[error("no fitted design point lies below the query point")]
    BelowObservedRange,
}
