//! Floating-point abstraction shared by the numerical modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar used by the solver, residual and network code.
///
/// Implemented for `f32` and `f64`. Training and IO use `f64`; the Biot
/// coefficients span roughly thirteen decades, which `f32` resolves only
/// coarsely.
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
    /// Converts an `f64` literal, panicking only if the target cannot hold it.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Converts a count to the scalar type.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// Lossy widening to `f64`.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Scalar usable with the FFT routines.
///
/// Kept separate from [`Scalar`] because `FftNum` brings `Signed` into scope,
/// which makes `abs` and `signum` ambiguous in generic code.
pub trait SpectralScalar: Scalar + rustfft::FftNum {}

impl<T: Scalar + rustfft::FftNum> SpectralScalar for T {}
