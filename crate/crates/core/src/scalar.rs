//! Scalar abstraction for the numeric core.
//!
//! Everything numeric in this crate is generic over [`Real`], implemented
//! for `f32` and `f64`. The `f64` instantiation is the normative one (the
//! CLI and all file formats use it); `f32` is available for callers that
//! trade precision for footprint, with validation tolerances widened to
//! match.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar type used throughout the crate.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Absolute tolerance on probability-vector sums (matrix rows and
    /// occupancy vectors). Loose enough for accumulated rounding at 64
    /// states, tight enough to catch logic errors.
    const ROW_SUM_TOL: Self;

    /// Converts an `f64` constant into this scalar type.
    fn cast(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 constant must be representable")
    }

    /// Converts an index or count into this scalar type.
    fn cast_usize(value: usize) -> Self {
        Self::from_usize(value).expect("count must be representable")
    }
}

impl Real for f64 {
    const ROW_SUM_TOL: f64 = 1e-9;
}

impl Real for f32 {
    const ROW_SUM_TOL: f32 = 1e-4;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cast_round_trips_simple_constants() {
        assert_eq!(f64::cast(0.25), 0.25);
        assert_eq!(f32::cast(0.25), 0.25_f32);
        assert_eq!(f64::cast_usize(12), 12.0);
    }
}
