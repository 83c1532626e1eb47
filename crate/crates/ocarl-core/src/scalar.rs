//! Floating-point abstraction over the engine's element type.

use core::fmt::{Debug, Display};
use num_traits::Float;

/// Element type for tensors and network parameters.
///
/// Implemented for `f32` and `f64`. Gradient checking and the analytic test
/// anchors instantiate `f64`; training may use either (`f32` roughly halves
/// wall clock on wide SIMD units at identical architecture).
pub trait Scalar: Float + Debug + Display + Default + Send + Sync + 'static {
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline(always)]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn of(x: f64) -> Self {
        x
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }
}
