//! Floating-point abstraction so numerical kernels run in f32 for training
//! and f64 for gradient-check suites.

use ndarray::LinalgScalar;
use num_traits::{Float, FromPrimitive, NumAssign};

pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + LinalgScalar
    + rustfft::FftNum
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}
