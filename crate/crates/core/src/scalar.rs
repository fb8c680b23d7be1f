use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar the solvers are generic over (`f32` or `f64`).
pub trait Real:
    Float
    + FromPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("constant representable in scalar type")
    }

    /// Absolute tolerance `x`, floored at a small multiple of machine epsilon
    /// so that `f32` instantiations remain reachable.
    #[inline]
    fn tol(x: f64) -> Self {
        Self::lit(x).max(Self::epsilon() * Self::lit(16.0))
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Largest absolute entry of a slice (0 for an empty slice).
pub(crate) fn sup<T: Real>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

pub(crate) fn sup_diff<T: Real>(xs: &[T], ys: &[T]) -> T {
    xs.iter()
        .zip(ys)
        .fold(T::zero(), |m, (x, y)| m.max((*x - *y).abs()))
}

pub(crate) fn dot<T: Real>(xs: &[T], ys: &[T]) -> T {
    xs.iter().zip(ys).map(|(x, y)| *x * *y).sum()
}
