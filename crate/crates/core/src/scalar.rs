//! Scalar abstraction shared by embedding fields and the loss.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating point element type of an embedding field: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Debug + Display + Default + Send + Sync + 'static
{
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Squared Euclidean distance between two equally sized vectors.
    #[inline]
    fn dist2(a: &[Self], b: &[Self]) -> Self {
        a.iter()
            .zip(b)
            .fold(Self::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
    }

    #[inline]
    fn norm2(a: &[Self]) -> Self {
        a.iter().fold(Self::zero(), |acc, &x| acc + x * x)
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssignOps
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

/// `[x]_+`
#[inline]
pub fn hinge<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}
