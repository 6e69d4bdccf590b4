//! Scalar abstraction: every numeric routine in this crate is generic over a
//! real floating-point type so the same pipeline runs in `f32` or `f64`.

use ndarray::LinalgScalar;
use num_traits::{Float, NumAssign};
use rustfft::FftNum;
use std::fmt::Display;
use std::iter::Sum;

/// Real scalar type the whole pipeline is generic over: `f32` or `f64`.
pub trait Real: Float + NumAssign + FftNum + LinalgScalar + Sum<Self> + Display {}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for converting an `f64` literal into the working scalar type.
///
/// Panics only if the target type cannot represent the value at all, which
/// cannot happen for finite constants with `f32`/`f64`.
#[inline]
pub fn cast<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("finite f64 constant must convert to Real scalar")
}

/// Lossy conversion back to `f64` for reporting and serialization.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().expect("Real scalar must convert to f64")
}
