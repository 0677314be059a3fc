//! Floating-point abstraction for the closed-form model kernels.
//!
//! Link functions, the softmax of the relative hazards, baseline hazard step
//! functions and the mixture identities are written against [`Real`] so they
//! can be evaluated in `f32` or `f64`. Estimation (Newton solvers, EM,
//! information matrices) is carried out in `f64`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumCast};

/// floating point: f32 or f64
pub trait Real:
    Float + FloatConst + FromPrimitive + NumCast + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("literal representable in target float")
    }

    /// Lossy conversion to `f64`.
    #[inline]
    fn as_f64(self) -> f64 {
        <f64 as NumCast>::from(self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
