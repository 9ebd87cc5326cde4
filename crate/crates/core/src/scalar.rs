//! Scalar abstractions shared by every solver in the crate.
//!
//! The isotonic solvers only need ordered field arithmetic, so they are
//! written against [`Scalar`] and run unchanged on `f32`, `f64` and exact
//! `BigRational`. Everything that needs logarithms or square roots is
//! written against [`Real`].

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Ordered field element usable by the isotonic solvers.
pub trait Scalar:
    Clone + Debug + PartialOrd + Num + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// `false` for NaN and infinities.
    fn is_finite_value(&self) -> bool;

    /// Relative slack for deciding that an accumulated quantity is
    /// strictly positive. Zero for exact types.
    fn relative_slack() -> Self;

    fn magnitude(&self) -> Self {
        if *self < Self::zero() {
            Self::zero() - self.clone()
        } else {
            self.clone()
        }
    }

    fn from_usize_exact(n: usize) -> Self {
        Self::from_usize(n).expect("usize must be representable")
    }
}

impl Scalar for f64 {
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }

    fn relative_slack() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }

    fn relative_slack() -> Self {
        1e-5
    }
}

impl Scalar for BigRational {
    fn is_finite_value(&self) -> bool {
        true
    }

    fn relative_slack() -> Self {
        BigRational::from_integer(BigInt::from(0))
    }
}

/// Floating-point scalar for likelihoods, quantiles and metrics.
pub trait Real: Scalar + Float {}

impl<T: Scalar + Float> Real for T {}

/// Converts an `f64` literal into `T`.
#[inline]
pub(crate) fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal must be representable")
}
