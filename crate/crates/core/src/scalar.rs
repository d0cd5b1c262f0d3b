//! Floating-point abstraction shared by every numerical routine in the crate.

use std::fmt;
use std::iter::Sum;

use num_traits::{FromPrimitive, NumAssignOps, ToPrimitive};

/// Real scalar the estimators are written against (`f32` or `f64`).
///
/// File formats and the simulation harness are `f64`; the aliases at the
/// crate root pin that choice for everyday use.
pub trait Real:
    num_traits::Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Default
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Largest magnitude allowed for the exponent in `exp(-x'beta)`.
    const EXP_LIMIT: f64;

    /// Converts an `f64` literal. Panics only if the value is not representable,
    /// which cannot happen for finite literals and the two supported types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }
}

impl Real for f64 {
    const EXP_LIMIT: f64 = 700.0;
}

impl Real for f32 {
    const EXP_LIMIT: f64 = 85.0;
}
