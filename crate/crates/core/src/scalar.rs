use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type the solvers and learners are generic over.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` constant into `T`.
#[inline]
pub fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant representable in scalar type")
}

#[inline]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
