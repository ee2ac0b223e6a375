//! Scalar abstraction for the numeric parts of the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::ScalarOperand;

/// Floating-point scalar the solvers and metrics are generic over.
///
/// Implemented for `f32` and `f64`. The bound set is what the linear
/// algebra and the optimization routines need: IEEE float operations,
/// conversions from primitive counts/sizes, and ndarray scalar ops.
pub trait Float:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssignOps
    + ScalarOperand
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Shorthand for lossy conversion from `f64` constants.
    fn cast(x: f64) -> Self {
        Self::from_f64(x).unwrap()
    }

    /// Shorthand for conversion from element counts.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).unwrap()
    }
}

impl Float for f32 {}
impl Float for f64 {}

/// Numerically stable `ln(1 + exp(t))`.
pub fn log1p_exp<F: Float>(t: F) -> F {
    if t > F::zero() {
        t + t.neg().exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Numerically stable logistic function `1 / (1 + exp(-t))`.
pub fn sigmoid<F: Float>(t: F) -> F {
    if t >= F::zero() {
        let e = t.neg().exp();
        F::one() / (F::one() + e)
    } else {
        let e = t.exp();
        e / (F::one() + e)
    }
}
