//! Scalar abstraction shared by the statistical kernels.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive};

/// Floating point type the metric kernels are written against.
pub trait Scalar: Float + FromPrimitive + Debug + Send + Sync + 'static {
    /// Converts an `f64` constant; exact for every constant used in this crate.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl<T> Scalar for T where T: Float + FromPrimitive + Debug + Send + Sync + 'static {}

/// Left-to-right sum; the fixed order keeps results bit-reproducible.
pub(crate) fn sum<T: Scalar>(xs: impl IntoIterator<Item = T>) -> T {
    xs.into_iter().fold(T::zero(), |acc, x| acc + x)
}

pub(crate) fn mean<T: Scalar>(xs: &[T]) -> T {
    sum(xs.iter().copied()) / T::from_count(xs.len())
}

/// Sample variance with an `n - 1` denominator. Caller guarantees `len >= 2`.
pub(crate) fn sample_variance<T: Scalar>(xs: &[T]) -> T {
    let m = mean(xs);
    sum(xs.iter().map(|&x| (x - m) * (x - m))) / T::from_count(xs.len() - 1)
}
