//! im2col / col2im lowering shared by convolution and transposed convolution.
//!
//! Geometry convention: the "image" side has spatial dims (H, W); the "cols"
//! side has (OH, OW) rows related by `h = oh*sh + ki - ph`. For a forward
//! convolution the image is the input; for a transposed convolution the image
//! is the output and the roles are swapped.

use crate::scalar::Scalar;
use ndarray::{Array2, Array4, ArrayView4};

#[derive(Debug, Clone, Copy)]
pub struct ConvGeometry {
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
}

impl ConvGeometry {
    /// Output spatial size of a forward convolution over (h, w).
    pub fn conv_out(&self, h: usize, w: usize) -> (usize, usize) {
        let oh = (h + 2 * self.ph - self.kh) / self.sh + 1;
        let ow = (w + 2 * self.pw - self.kw) / self.sw + 1;
        (oh, ow)
    }

    /// Output spatial size of a transposed convolution over (h, w).
    pub fn conv_transpose_out(&self, h: usize, w: usize, oph: usize, opw: usize) -> (usize, usize) {
        let oh = (h - 1) * self.sh + self.kh + oph - 2 * self.ph;
        let ow = (w - 1) * self.sw + self.kw + opw - 2 * self.pw;
        (oh, ow)
    }
}

/// Gather image patches into a (B*OH*OW, C*KH*KW) matrix.
pub fn im2col<T: Scalar>(img: ArrayView4<T>, g: &ConvGeometry, oh: usize, ow: usize) -> Array2<T> {
    let (b, c, h, w) = img.dim();
    let k = c * g.kh * g.kw;
    let mut cols = Array2::<T>::zeros((b * oh * ow, k));
    let img = img.as_standard_layout();
    let img_s = img.as_slice().expect("im2col: need standard layout");
    let cols_s = cols.as_slice_mut().unwrap();
    for bi in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = ((bi * oh + oy) * ow + ox) * k;
                for ci in 0..c {
                    let plane = (bi * c + ci) * h * w;
                    for ki in 0..g.kh {
                        let y = (oy * g.sh + ki) as isize - g.ph as isize;
                        let base = row + (ci * g.kh + ki) * g.kw;
                        if y < 0 || y as usize >= h {
                            continue;
                        }
                        let src_row = plane + y as usize * w;
                        for kj in 0..g.kw {
                            let x = (ox * g.sw + kj) as isize - g.pw as isize;
                            if x < 0 || x as usize >= w {
                                continue;
                            }
                            cols_s[base + kj] = img_s[src_row + x as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add a cols matrix back into an image (adjoint of `im2col`).
pub fn col2im<T: Scalar>(
    cols: &Array2<T>,
    g: &ConvGeometry,
    b: usize,
    c: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
) -> Array4<T> {
    let k = c * g.kh * g.kw;
    assert_eq!(cols.dim(), (b * oh * ow, k));
    let mut img = Array4::<T>::zeros((b, c, h, w));
    let img_s = img.as_slice_mut().unwrap();
    let cols_s = cols.as_slice().expect("col2im: need standard layout");
    for bi in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = ((bi * oh + oy) * ow + ox) * k;
                for ci in 0..c {
                    let plane = (bi * c + ci) * h * w;
                    for ki in 0..g.kh {
                        let y = (oy * g.sh + ki) as isize - g.ph as isize;
                        if y < 0 || y as usize >= h {
                            continue;
                        }
                        let dst_row = plane + y as usize * w;
                        let base = row + (ci * g.kh + ki) * g.kw;
                        for kj in 0..g.kw {
                            let x = (ox * g.sw + kj) as isize - g.pw as isize;
                            if x < 0 || x as usize >= w {
                                continue;
                            }
                            img_s[dst_row + x as usize] += cols_s[base + kj];
                        }
                    }
                }
            }
        }
    }
    img
}
