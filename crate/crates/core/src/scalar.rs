//! Scalar abstraction shared by the numeric modules.
//!
//! Everything that does geometry, dynamics or filtering is written against
//! [`Real`], so the same code runs in `f32` (embedded-style budgets) or `f64`
//! (analysis and replay). I/O and the stochastic sensor generators work in
//! `f64` and convert at the boundary.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the simulator and the filter: `f32` or `f64`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Lift an `f64` literal into the scalar type.
    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant is representable")
    }

    /// Lossy conversion back to `f64` for logging and statistics.
    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
