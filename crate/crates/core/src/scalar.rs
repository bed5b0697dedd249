//! Floating-point scalar abstraction.
//!
//! All numeric code in this crate is generic over [`Scalar`]; concrete
//! aliases for the `f64` instantiation live at the crate root. Gradient
//! checks and the default training pipeline assume `f64` precision.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Scalar type the tensor core works over: `f32` or `f64`.
pub trait Scalar:
    Float
    + NumAssignOps
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into `Self`, rounding if necessary.
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to scalar")
    }

    /// Widens the value to `f64`.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
