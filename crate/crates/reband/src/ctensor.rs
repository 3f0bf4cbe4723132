//! Complex tensors stored as separate real and imaginary planes.

use crate::error::{RebandError, Result};
use crate::scalar::Scalar;
use ndarray::{Array, Dimension, Ix2, Ix3, Ix4, IxDyn, ShapeBuilder};

/// A complex-valued N-D array. `re` and `im` always share a shape.
#[derive(Debug, Clone, PartialEq)]
pub struct CArr<T, D: Dimension> {
    pub re: Array<T, D>,
    pub im: Array<T, D>,
}

pub type CArr2<T> = CArr<T, Ix2>;
pub type CArr3<T> = CArr<T, Ix3>;
pub type CArr4<T> = CArr<T, Ix4>;
pub type CArrD<T> = CArr<T, IxDyn>;

impl<T: Scalar, D: Dimension> CArr<T, D> {
    pub fn new(re: Array<T, D>, im: Array<T, D>) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(RebandError::ShapeMismatch(format!(
                "real {:?} vs imag {:?}",
                re.shape(),
                im.shape()
            )));
        }
        Ok(Self { re, im })
    }

    pub fn zeros<Sh: ShapeBuilder<Dim = D> + Clone>(shape: Sh) -> Self {
        Self {
            re: Array::zeros(shape.clone()),
            im: Array::zeros(shape),
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.re.shape()
    }

    pub fn raw_dim(&self) -> D {
        self.re.raw_dim()
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().all(|v| v.is_finite()) && self.im.iter().all(|v| v.is_finite())
    }

    pub fn conj(&self) -> Self {
        Self {
            re: self.re.clone(),
            im: self.im.mapv(|v| -v),
        }
    }

    pub fn scale(&self, a: T) -> Self {
        Self {
            re: self.re.mapv(|v| v * a),
            im: self.im.mapv(|v| v * a),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            re: &self.re + &other.re,
            im: &self.im + &other.im,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            re: &self.re - &other.re,
            im: &self.im - &other.im,
        }
    }

    /// Element-wise complex product.
    pub fn mul(&self, other: &Self) -> Self {
        Self {
            re: &self.re * &other.re - &self.im * &other.im,
            im: &self.re * &other.im + &self.im * &other.re,
        }
    }

    /// |z| per element.
    pub fn magnitude(&self) -> Array<T, D> {
        let mut out = self.re.mapv(|v| v * v);
        out += &self.im.mapv(|v| v * v);
        out.mapv_inplace(|v| v.sqrt());
        out
    }

    pub fn map_parts<F: Fn(&Array<T, D>) -> Array<T, D>>(&self, f: F) -> Self {
        Self {
            re: f(&self.re),
            im: f(&self.im),
        }
    }

    pub fn into_dyn(self) -> CArrD<T> {
        CArrD {
            re: self.re.into_dyn(),
            im: self.im.into_dyn(),
        }
    }
}

impl<T: Scalar> CArrD<T> {
    pub fn into_dimensionality<D2: Dimension>(self) -> Result<CArr<T, D2>> {
        let re = self
            .re
            .into_dimensionality::<D2>()
            .map_err(|e| RebandError::ShapeMismatch(e.to_string()))?;
        let im = self
            .im
            .into_dimensionality::<D2>()
            .map_err(|e| RebandError::ShapeMismatch(e.to_string()))?;
        Ok(CArr { re, im })
    }
}

/// Squared Frobenius norm of a complex tensor.
pub fn norm_sq<T: Scalar, D: Dimension>(x: &CArr<T, D>) -> T {
    let mut acc = T::zero();
    for v in x.re.iter() {
        acc += *v * *v;
    }
    for v in x.im.iter() {
        acc += *v * *v;
    }
    acc
}
