use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar the scoring and metric kernels are generic over: `f32` or `f64`.
pub trait Scalar: Float + FromPrimitive + Sum + Debug + Display + Send + Sync + 'static {
    /// Lossless-enough conversion from a stored `f32` embedding entry.
    fn from_stored(v: f32) -> Self;

    fn widen_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_stored(v: f32) -> Self {
        v
    }

    #[inline]
    fn widen_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_stored(v: f32) -> Self {
        v as f64
    }

    #[inline]
    fn widen_f64(self) -> f64 {
        self
    }
}

#[inline]
pub(crate) fn lit<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("finite literal converts to any float type")
}
