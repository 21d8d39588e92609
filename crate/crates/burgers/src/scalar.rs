//! Scalar abstraction: all numerics are generic over `Real`, implemented
//! for `f32` and `f64`. Concrete aliases live at the crate root.

use num_traits::{Float, FloatConst, NumAssign};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftNum;
use std::fmt::Display;
use std::iter::Sum;

/// Floating-point scalar usable by every module: field values, increments,
/// spectral coefficients and bound evaluations.
pub trait Real: Float + FloatConst + NumAssign + FftNum + Sum<Self> + Display {
    /// Lossy conversion from `f64` (exact for `f64`, rounded for `f32`).
    fn cast(v: f64) -> Self;
    /// Widening conversion used for serialized records and error payloads.
    fn as_f64(self) -> f64;
    /// Conversion from grid indices and counts.
    fn from_index(v: usize) -> Self;
    /// One standard normal draw.
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn cast(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn from_index(v: usize) -> Self {
                v as $t
            }
            #[inline]
            fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.sample(StandardNormal)
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);
