//! Scalar abstraction for the algebraic parts of the crate.
//!
//! Parameter maps and polynomial expansion only need field arithmetic, so
//! they are written against [`Scalar`] and work for `f32`, `f64` and exact
//! rationals alike. Numerical stages (root finding, simulation, fitting)
//! are `f64` only.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{Num, ToPrimitive};

/// Field-like scalar usable by the circuit and coefficient maps.
pub trait Scalar: Num + Clone + PartialOrd + ToPrimitive + Debug + Send + Sync + 'static {
    /// `false` for NaN and infinities; exact types are always finite.
    fn is_finite_value(&self) -> bool;

    /// Lossy view used for tolerances and diagnostics.
    fn approx_f64(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn is_strictly_positive(&self) -> bool {
        self.is_finite_value() && *self > Self::zero()
    }
}

impl Scalar for f32 {
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl Scalar for f64 {
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl Scalar for Ratio<i64> {
    fn is_finite_value(&self) -> bool {
        true
    }
}

impl Scalar for BigRational {
    fn is_finite_value(&self) -> bool {
        true
    }
}

/// Exact rational from an integer ratio, handy in tests and oracles.
pub fn big_ratio(numer: i64, denom: i64) -> BigRational {
    BigRational::new(BigInt::from(numer), BigInt::from(denom))
}
