//! Monotone regression for several related functions with likelihood-ratio
//! driven borrowing of strength between them.

pub mod isotonic;
pub mod joint;
pub mod borrowing;
pub mod likelihood;
pub mod scalar;
pub mod simlab;

use num_rational::BigRational;

pub use scalar::{Real, Scalar};

/// Double-precision design point.
pub type Point = isotonic::DesignPoint<f64>;
/// Design point with exact rational coordinates.
pub type ExactPoint = isotonic::DesignPoint<BigRational>;
pub type Poset = isotonic::DesignPoset<f64>;
pub type ExactPoset = isotonic::DesignPoset<BigRational>;
pub type Problem = isotonic::IsotonicProblem<f64>;
pub type ExactProblem = isotonic::IsotonicProblem<BigRational>;
pub type Solution = isotonic::IsotonicSolution<f64>;
pub type ExactSolution = isotonic::IsotonicSolution<BigRational>;
