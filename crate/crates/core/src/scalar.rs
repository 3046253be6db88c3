//! Scalar abstraction shared by every module.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point coordinate type. Implemented for `f32` and `f64`.
///
/// All comparisons in the library are exact floating-point comparisons; the
/// pruning bounds are already conservative, so no epsilon is applied.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + FromStr + Debug + Display + LowerExp + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for literal constants.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 literal fits the scalar type")
    }

    /// `v` as `f64`, used for formatting and statistics.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Sum
        + FromStr
        + Debug
        + Display
        + LowerExp
        + Default
        + Send
        + Sync
        + 'static
{
}
