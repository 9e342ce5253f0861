//! Scalar abstraction: all core math is generic over the floating-point type.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar usable throughout the crate: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for converting an `f64` literal into the working scalar type.
#[inline]
pub fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant must convert into the scalar type")
}

/// A tolerance that equals `tol64` in double precision but widens for scalar
/// types whose machine epsilon would make `tol64` unattainable.
#[inline]
pub fn scaled_tol<T: Scalar>(tol64: f64) -> T {
    let floor = T::epsilon() * cast::<T>(1e3);
    cast::<T>(tol64).max(floor)
}
