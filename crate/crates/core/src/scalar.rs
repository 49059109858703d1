//! Floating-point abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar type the library is generic over.
///
/// Implemented for `f32` and `f64`. The tolerances quoted throughout the crate
/// (1e-12 mass checks, 1e-300 underflow guards) assume `f64`; with `f32` they are
/// clamped to what the type can represent and results are correspondingly coarser.
pub trait Scalar:
    'static
    + Send
    + Sync
    + Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + LowerExp
{
    /// Bit-exact identity of a value, used as a cache key.
    fn key(self) -> u64;
}

impl Scalar for f32 {
    fn key(self) -> u64 {
        u64::from(self.to_bits())
    }
}

impl Scalar for f64 {
    fn key(self) -> u64 {
        self.to_bits()
    }
}

/// Converts an `f64` literal into `F`.
#[inline]
pub fn lit<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("literal representable in scalar type")
}

/// Converts a count into `F`.
#[inline]
pub fn from_usize<F: Scalar>(x: usize) -> F {
    F::from_usize(x).expect("count representable in scalar type")
}

/// `x` clamped from below to the smallest positive normal value of `F`.
#[inline]
pub(crate) fn tiny<F: Scalar>(x: f64) -> F {
    lit::<F>(x).max(F::min_positive_value())
}
