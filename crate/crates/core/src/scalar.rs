//! Scalar abstraction for the numeric core.
//!
//! Everything numeric in this crate (simulator kinematics, epiGA
//! operators, the attention model and its backprop) is generic over a
//! floating-point scalar so the same code runs in `f32` or `f64`.
//! Concrete `f64` aliases live at the crate root; `f64` is the default
//! everywhere reproducibility matters.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::distributions::uniform::SampleUniform;

/// Floating-point scalar usable by the numeric core: f32 or f64.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + SampleUniform
    + Sum<Self>
    + ndarray::ScalarOperand
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for lifting an `f64` constant into the scalar type.
#[inline]
pub fn real<S: Real>(x: f64) -> S {
    S::from_f64(x).expect("f64 constant representable in scalar type")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lifts_constants() {
        assert_eq!(real::<f64>(0.5), 0.5);
        assert_eq!(real::<f32>(0.5), 0.5f32);
    }
}
