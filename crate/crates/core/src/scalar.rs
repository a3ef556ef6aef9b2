use core::fmt::{Debug, Display};

use num_traits::Float;

/// Floating point element type of a tensor.
///
/// Implemented for `f32` (training) and `f64` (gradient checking).
pub trait Scalar: Float + Debug + Display + Default + Send + Sync + 'static {
    /// Dtype code used by the checkpoint format.
    const DTYPE_CODE: u8;

    fn from_f64(v: f64) -> Self;

    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    const DTYPE_CODE: u8 = 0;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const DTYPE_CODE: u8 = 1;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}
