//! Numeric abstraction shared by every computation in the crate.
//!
//! Storage is usually `f32` (embedding exports) while scores, metrics and
//! training run in `f64`; everything in between is written against
//! [`Scalar`] so either precision can be used end to end.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, NumAssign, ToPrimitive};

/// Floating-point element type accepted by matrices, scores and heads.
pub trait Scalar:
    Float + FloatConst + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float + FloatConst + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
}

/// Lossy numeric conversion between scalar types (and from integers).
///
/// Conversions between `f32`, `f64` and `usize` never fail, so the
/// `NumCast` result is unwrapped.
#[inline]
pub fn cast<T: Scalar, U: ToPrimitive>(value: U) -> T {
    T::from(value).expect("numeric conversion between float types cannot fail")
}
