//! Weight initialization.
//!
//! Each of the real and imaginary kernels draws from a fan-in-scaled uniform
//! distribution with gain 1/sqrt(2) so the complex magnitude variance matches
//! that of an equivalent real layer.

use crate::scalar::Scalar;
use ndarray::{Array, ShapeBuilder};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn uniform_fan_in<T: Scalar, Sh: ShapeBuilder>(
    shape: Sh,
    fan_in: usize,
    rng: &mut ChaCha8Rng,
) -> Array<T, Sh::Dim> {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt() / std::f64::consts::SQRT_2;
    Array::from_shape_simple_fn(shape, || T::of(rng.gen_range(-bound..bound)))
}
