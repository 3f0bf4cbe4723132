//! Complex-valued differentiable building blocks.

pub mod act;
pub mod attention;
pub mod conv;
pub mod im2col;
pub mod init;
pub mod linear;
pub mod norm;
pub mod param;

use crate::scalar::Scalar;

pub use act::{crelu, CRelu};
pub use attention::CMhsa;
pub use conv::{CConv2d, CConvT2d, CDepthwiseConv1d};
pub use im2col::ConvGeometry;
pub use linear::CLinear;
pub use norm::{CBatchNorm2d, CLayerNorm, RealBatchNorm, RealLayerNorm};
pub use param::{CParam, Params, Tensor};

macro_rules! impl_params {
    ($ty:ident) => {
        impl<T: Scalar> Params<T> for $ty<T> {
            fn visit_params(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
                self.visit(f);
            }
        }
    };
    ($ty:ident, buffers) => {
        impl<T: Scalar> Params<T> for $ty<T> {
            fn visit_params(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
                self.visit(f);
            }
            fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut [T])) {
                self.visit_buffers(f);
            }
        }
    };
}

impl_params!(CConv2d);
impl_params!(CConvT2d);
impl_params!(CDepthwiseConv1d);
impl_params!(CLinear);
impl_params!(CMhsa);
impl_params!(RealBatchNorm, buffers);
impl_params!(CBatchNorm2d, buffers);
impl_params!(RealLayerNorm);
impl_params!(CLayerNorm);

