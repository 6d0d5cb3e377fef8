//! Scalar abstraction the whole crate is generic over.

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar used for grids, fields, and solvers.
///
/// Implemented for `f32` and `f64`. The verification tolerances baked into
/// the test suite assume `f64`; `f32` is supported for cheap exploratory
/// runs where 1e-6 accuracy is enough.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::ops::DivAssign
    + Default
    + Send
    + Sync
    + serde::Serialize
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` constant into `T`. Panics only if `T` cannot represent
/// ordinary finite constants, which neither supported scalar does.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("finite f64 constant must be representable")
}

/// Converts `T` back to `f64` for error payloads and reports.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
