//! Floating-point scalar abstraction: f32 or f64.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating-point scalar the simulation core is generic over.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for converting an `f64` literal into the generic scalar.
#[inline]
pub fn num<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("f64 literal must convert into the scalar type")
}

/// `1/n` as a scalar; the actin-coordinate step for an `n`-node cortex.
#[inline]
pub fn recip_of<S: Scalar>(n: usize) -> S {
    S::one() / S::from_usize(n).expect("node count must fit the scalar type")
}
