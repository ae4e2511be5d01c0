//! Floating-point abstraction shared by every numeric kernel.
//!
//! All image containers and algorithms are generic over [`Scalar`]; the crate
//! root exposes `f64` aliases for the common case.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar type usable by the pipeline (implemented for `f32` and `f64`).
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Short type name, used in checkpoints and diagnostics.
    const NAME: &'static str;

    /// Lossy conversion from an `f64` literal or intermediate.
    fn cast(v: f64) -> Self;

    /// Widening conversion for reporting and serialization.
    fn as_f64(self) -> f64;

    #[inline]
    fn count(n: usize) -> Self {
        Self::cast(n as f64)
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn cast(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn cast(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Intensity on the 8-bit scale, `v * 255`.
#[inline]
pub(crate) fn to_8bit<T: Scalar>(v: T) -> T {
    v * T::cast(255.0)
}

/// Quantize a unit-range intensity to an 8-bit level (rounded, clamped).
#[inline]
pub(crate) fn quantize<T: Scalar>(v: T) -> u8 {
    let level = (v.as_f64() * 255.0).round();
    level.clamp(0.0, 255.0) as u8
}
