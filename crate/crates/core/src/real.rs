//! Scalar abstraction for the closed-form math layer.
//!
//! All analytic formulas (welfare, distribution constants, regret bounds)
//! are generic over [`Real`] so they can be evaluated at `f32` or `f64`.
//! The simulation layer is concrete `f64`; see the crate root for the
//! default alias.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar usable in the closed-form formulas.
pub trait Real: Float + FromPrimitive + Debug + Copy + Send + Sync + 'static {
    /// Lossless-enough conversion from `f64` literals appearing in formulas.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable")
    }

    /// Euler's number minus two, a constant of the regret bounds.
    fn e_minus_2() -> Self {
        Self::c(std::f64::consts::E - 2.0)
    }

    fn half() -> Self {
        Self::c(0.5)
    }

    fn two() -> Self {
        Self::c(2.0)
    }
}

impl<T> Real for T where T: Float + FromPrimitive + Debug + Copy + Send + Sync + 'static {}
