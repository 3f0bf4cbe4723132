//! Oracle and gradient tests for the complex building blocks.
//!
//! Every op is checked against an independent scalar-loop implementation of
//! complex multiply-accumulate and against central finite differences in
//! double precision.

use ndarray::{Array1, Array2, Array3, Array4, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reband::cplx::{CBatchNorm2d, CConv2d, CConvT2d, CLinear, CMhsa, CRelu, Params};
use reband::gradcheck::{finite_difference_check, finite_difference_input_check};
use reband::{CArr2, CArr3, CArr4};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_arr4(r: &mut ChaCha8Rng, d: (usize, usize, usize, usize)) -> Array4<f64> {
    Array4::from_shape_simple_fn(d, || r.gen_range(-1.0..1.0))
}

fn rand_c4(r: &mut ChaCha8Rng, d: (usize, usize, usize, usize)) -> CArr4<f64> {
    CArr4 {
        re: rand_arr4(r, d),
        im: rand_arr4(r, d),
    }
}

fn rel_err4(a: &Array4<f64>, b: &Array4<f64>) -> f64 {
    let num: f64 = (a - b).mapv(|v| v * v).sum().sqrt();
    let den: f64 = b.mapv(|v| v * v).sum().sqrt();
    num / den.max(1e-12)
}

/// Brute-force complex convolution: scalar complex multiply-accumulate.
#[allow(clippy::too_many_arguments)]
fn conv2d_oracle(
    x: &CArr4<f64>,
    wr: &Array4<f64>,
    wi: &Array4<f64>,
    stride: (usize, usize),
    pad: (usize, usize),
) -> CArr4<f64> {
    let (b, cin, h, w) = x.re.dim();
    let (cout, _, kh, kw) = wr.dim();
    let oh = (h + 2 * pad.0 - kh) / stride.0 + 1;
    let ow = (w + 2 * pad.1 - kw) / stride.1 + 1;
    let mut out = CArr4::zeros((b, cout, oh, ow));
    for bi in 0..b {
        for co in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let (mut ar, mut ai) = (0.0, 0.0);
                    for ci in 0..cin {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let y = (oy * stride.0 + ki) as isize - pad.0 as isize;
                                let xx = (ox * stride.1 + kj) as isize - pad.1 as isize;
                                if y < 0 || y >= h as isize || xx < 0 || xx >= w as isize {
                                    continue;
                                }
                                let (y, xx) = (y as usize, xx as usize);
                                let (vr, vi) = (x.re[[bi, ci, y, xx]], x.im[[bi, ci, y, xx]]);
                                let (gr, gi) = (wr[[co, ci, ki, kj]], wi[[co, ci, ki, kj]]);
                                ar += vr * gr - vi * gi;
                                ai += vr * gi + vi * gr;
                            }
                        }
                    }
                    out.re[[bi, co, oy, ox]] = ar;
                    out.im[[bi, co, oy, ox]] = ai;
                }
            }
        }
    }
    out
}

/// Brute-force transposed convolution: scatter-accumulate loop.
fn conv_transpose2d_oracle(
    x: &CArr4<f64>,
    wr: &Array4<f64>,
    wi: &Array4<f64>,
    stride: (usize, usize),
    pad: (usize, usize),
    opad: (usize, usize),
) -> CArr4<f64> {
    let (b, cin, h, w) = x.re.dim();
    let (_, cout, kh, kw) = wr.dim();
    let oh = (h - 1) * stride.0 + kh + opad.0 - 2 * pad.0;
    let ow = (w - 1) * stride.1 + kw + opad.1 - 2 * pad.1;
    let mut out = CArr4::zeros((b, cout, oh, ow));
    for bi in 0..b {
        for ci in 0..cin {
            for iy in 0..h {
                for ix in 0..w {
                    let (vr, vi) = (x.re[[bi, ci, iy, ix]], x.im[[bi, ci, iy, ix]]);
                    for co in 0..cout {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let y = (iy * stride.0 + ki) as isize - pad.0 as isize;
                                let xx = (ix * stride.1 + kj) as isize - pad.1 as isize;
                                if y < 0 || y >= oh as isize || xx < 0 || xx >= ow as isize {
                                    continue;
                                }
                                let (gr, gi) = (wr[[ci, co, ki, kj]], wi[[ci, co, ki, kj]]);
                                out.re[[bi, co, y as usize, xx as usize]] += vr * gr - vi * gi;
                                out.im[[bi, co, y as usize, xx as usize]] += vr * gi + vi * gr;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// complex_conv2d
// ---------------------------------------------------------------------------

#[test]
fn conv2d_identity_kernel_is_identity() {
    let mut r = rng(1);
    let c = 3;
    let mut conv = CConv2d::<f64>::new(c, c, (1, 1), (1, 1), (0, 0), false, &mut r);
    conv.w.re.data.fill(0.0);
    conv.w.im.data.fill(0.0);
    for i in 0..c {
        conv.w.re.data[[i, i, 0, 0]] = 1.0;
    }
    let x = rand_c4(&mut r, (2, c, 5, 4));
    let y = conv.forward(&x, false).unwrap();
    assert!(rel_err4(&y.re, &x.re) < 1e-12);
    assert!(rel_err4(&y.im, &x.im) < 1e-12);
}

#[test]
fn conv2d_j_kernel_multiplies_by_j() {
    let mut r = rng(2);
    let c = 2;
    let mut conv = CConv2d::<f64>::new(c, c, (1, 1), (1, 1), (0, 0), false, &mut r);
    conv.w.re.data.fill(0.0);
    conv.w.im.data.fill(0.0);
    for i in 0..c {
        conv.w.im.data[[i, i, 0, 0]] = 1.0;
    }
    let x = rand_c4(&mut r, (1, c, 4, 4));
    let y = conv.forward(&x, false).unwrap();
    // (a + jb) * j = -b + ja
    assert!(rel_err4(&y.re, &x.im.mapv(|v| -v)) < 1e-12);
    assert!(rel_err4(&y.im, &x.re) < 1e-12);
}

#[test]
fn conv2d_matches_complex_mac_oracle() {
    let mut r = rng(3);
    let mut conv = CConv2d::<f64>::new(3, 2, (3, 3), (1, 1), (1, 1), false, &mut r);
    let x = rand_c4(&mut r, (1, 3, 4, 4));
    let y = conv.forward(&x, false).unwrap();
    let want = conv2d_oracle(&x, &conv.w.re.data, &conv.w.im.data, (1, 1), (1, 1));
    assert!(rel_err4(&y.re, &want.re) < 1e-6);
    assert!(rel_err4(&y.im, &want.im) < 1e-6);
}

#[test]
fn conv2d_strided_matches_oracle() {
    let mut r = rng(4);
    let mut conv = CConv2d::<f64>::new(2, 4, (5, 3), (2, 1), (2, 1), true, &mut r);
    let x = rand_c4(&mut r, (2, 2, 8, 6));
    let y = conv.forward(&x, false).unwrap();
    let mut want = conv2d_oracle(&x, &conv.w.re.data, &conv.w.im.data, (2, 1), (2, 1));
    let b = conv.b.as_ref().unwrap();
    for co in 0..4 {
        want.re
            .index_axis_mut(Axis(1), co)
            .mapv_inplace(|v| v + b.re.data[co]);
        want.im
            .index_axis_mut(Axis(1), co)
            .mapv_inplace(|v| v + b.im.data[co]);
    }
    assert_eq!(y.re.dim(), (2, 4, 4, 6));
    assert!(rel_err4(&y.re, &want.re) < 1e-6);
    assert!(rel_err4(&y.im, &want.im) < 1e-6);
}

#[test]
fn conv2d_reduces_to_real_convolution() {
    let mut r = rng(5);
    let mut conv = CConv2d::<f64>::new(2, 2, (3, 3), (1, 1), (1, 1), false, &mut r);
    conv.w.im.data.fill(0.0);
    let mut x = rand_c4(&mut r, (1, 2, 6, 6));
    x.im.fill(0.0);
    let y = conv.forward(&x, false).unwrap();
    let want = conv2d_oracle(&x, &conv.w.re.data, &conv.w.im.data, (1, 1), (1, 1));
    assert!(rel_err4(&y.re, &want.re) < 1e-12);
    assert!(y.im.iter().all(|v| *v == 0.0));
}

#[test]
fn conv2d_is_linear_in_input() {
    let mut r = rng(6);
    let mut conv = CConv2d::<f64>::new(2, 3, (3, 3), (1, 1), (1, 1), false, &mut r);
    let x = rand_c4(&mut r, (1, 2, 5, 5));
    let alpha = 2.75;
    let y1 = conv.forward(&x.scale(alpha), false).unwrap();
    let y0 = conv.forward(&x, false).unwrap().scale(alpha);
    assert!(rel_err4(&y1.re, &y0.re) < 1e-12);
    assert!(rel_err4(&y1.im, &y0.im) < 1e-12);
}

#[test]
fn conv2d_rejects_channel_mismatch() {
    let mut r = rng(7);
    let mut conv = CConv2d::<f64>::new(3, 2, (3, 3), (1, 1), (1, 1), false, &mut r);
    let x = rand_c4(&mut r, (1, 2, 4, 4));
    assert!(conv.forward(&x, false).is_err());
}

#[test]
fn conv2d_gradients_match_finite_differences() {
    let mut r = rng(8);
    let mut conv = CConv2d::<f64>::new(2, 3, (3, 3), (2, 1), (1, 1), true, &mut r);
    let x = rand_c4(&mut r, (2, 2, 6, 5));
    let proj = rand_c4(&mut r, (2, 3, 3, 5));
    let loss = |m: &mut CConv2d<f64>, x: &CArr4<f64>| -> f64 {
        let y = m.forward(x, true).unwrap();
        (&y.re * &proj.re).sum() + (&y.im * &proj.im).sum()
    };
    conv.zero_grad();
    let _ = loss(&mut conv, &x);
    let gx = conv.backward(&proj);
    let rep = finite_difference_check(&mut conv, |m| loss(m, &x), 1e-5, 200, 42);
    assert!(rep.max_rel_err < 1e-4, "weight grad err {}", rep.max_rel_err);

    // input gradient
    let mut flat: Vec<f64> = x.re.iter().chain(x.im.iter()).cloned().collect();
    let analytic: Vec<f64> = gx.re.iter().chain(gx.im.iter()).cloned().collect();
    let dim = x.re.raw_dim();
    let n = x.re.len();
    let rep = finite_difference_input_check(
        &mut flat,
        &analytic,
        |v| {
            let xx = CArr4 {
                re: Array4::from_shape_vec(dim.clone(), v[..n].to_vec()).unwrap(),
                im: Array4::from_shape_vec(dim.clone(), v[n..].to_vec()).unwrap(),
            };
            loss(&mut conv, &xx)
        },
        1e-5,
        120,
        43,
    );
    assert!(rep.max_rel_err < 1e-4, "input grad err {}", rep.max_rel_err);
}

// ---------------------------------------------------------------------------
// complex_conv_transpose2d
// ---------------------------------------------------------------------------

#[test]
fn conv_transpose2d_identity_kernel_is_identity() {
    let mut r = rng(10);
    let c = 2;
    let mut conv = CConvT2d::<f64>::new(c, c, (1, 1), (1, 1), (0, 0), (0, 0), false, &mut r);
    conv.w.re.data.fill(0.0);
    conv.w.im.data.fill(0.0);
    for i in 0..c {
        conv.w.re.data[[i, i, 0, 0]] = 1.0;
    }
    let x = rand_c4(&mut r, (1, c, 4, 5));
    let y = conv.forward(&x, false).unwrap();
    assert!(rel_err4(&y.re, &x.re) < 1e-12);
    assert!(rel_err4(&y.im, &x.im) < 1e-12);
}

#[test]
fn conv_transpose_restores_strided_conv_dims() {
    let mut r = rng(11);
    let mut enc = CConv2d::<f64>::new(2, 4, (5, 3), (2, 1), (2, 1), false, &mut r);
    let mut dec = CConvT2d::<f64>::new(4, 2, (5, 3), (2, 1), (2, 1), (1, 0), false, &mut r);
    let x = rand_c4(&mut r, (1, 2, 16, 7));
    let e = enc.forward(&x, false).unwrap();
    assert_eq!(e.re.dim(), (1, 4, 8, 7));
    let d = dec.forward(&e, false).unwrap();
    assert_eq!(d.re.dim(), (1, 2, 16, 7));
}

#[test]
fn conv_transpose2d_matches_scatter_oracle() {
    let mut r = rng(12);
    let mut conv = CConvT2d::<f64>::new(3, 2, (5, 3), (2, 1), (2, 1), (1, 0), false, &mut r);
    let x = rand_c4(&mut r, (2, 3, 6, 5));
    let y = conv.forward(&x, false).unwrap();
    let want = conv_transpose2d_oracle(
        &x,
        &conv.w.re.data,
        &conv.w.im.data,
        (2, 1),
        (2, 1),
        (1, 0),
    );
    assert!(rel_err4(&y.re, &want.re) < 1e-6);
    assert!(rel_err4(&y.im, &want.im) < 1e-6);
}

#[test]
fn conv_transpose2d_gradients_match_finite_differences() {
    let mut r = rng(13);
    let mut conv = CConvT2d::<f64>::new(2, 3, (5, 3), (2, 1), (2, 1), (1, 0), true, &mut r);
    let x = rand_c4(&mut r, (1, 2, 5, 4));
    let proj = rand_c4(&mut r, (1, 3, 10, 4));
    let loss = |m: &mut CConvT2d<f64>, x: &CArr4<f64>| -> f64 {
        let y = m.forward(x, true).unwrap();
        (&y.re * &proj.re).sum() + (&y.im * &proj.im).sum()
    };
    conv.zero_grad();
    let _ = loss(&mut conv, &x);
    let gx = conv.backward(&proj);
    let rep = finite_difference_check(&mut conv, |m| loss(m, &x), 1e-5, 200, 44);
    assert!(rep.max_rel_err < 1e-4, "weight grad err {}", rep.max_rel_err);

    let mut flat: Vec<f64> = x.re.iter().chain(x.im.iter()).cloned().collect();
    let analytic: Vec<f64> = gx.re.iter().chain(gx.im.iter()).cloned().collect();
    let dim = x.re.raw_dim();
    let n = x.re.len();
    let rep = finite_difference_input_check(
        &mut flat,
        &analytic,
        |v| {
            let xx = CArr4 {
                re: Array4::from_shape_vec(dim.clone(), v[..n].to_vec()).unwrap(),
                im: Array4::from_shape_vec(dim.clone(), v[n..].to_vec()).unwrap(),
            };
            loss(&mut conv, &xx)
        },
        1e-5,
        100,
        45,
    );
    assert!(rep.max_rel_err < 1e-4, "input grad err {}", rep.max_rel_err);
}

// ---------------------------------------------------------------------------
// complex_batch_norm
// ---------------------------------------------------------------------------

#[test]
fn batch_norm_constant_input_returns_shift() {
    let mut bn = CBatchNorm2d::<f64>::new(2);
    bn.bn_re.beta.data.assign(&Array1::from_vec(vec![0.5, -1.0]));
    bn.bn_im.beta.data.assign(&Array1::from_vec(vec![2.0, 0.0]));
    let mut x = CArr4::<f64>::zeros((2, 2, 3, 3));
    x.re.fill(7.0);
    x.im.fill(-3.0);
    let y = bn.forward(&x, true).unwrap();
    for bi in 0..2 {
        for (c, want) in [(0usize, 0.5), (1usize, -1.0)] {
            for v in y.re.index_axis(Axis(0), bi).index_axis(Axis(0), c).iter() {
                assert!((v - want).abs() < 1e-9);
            }
        }
        for v in y.im.index_axis(Axis(0), bi).index_axis(Axis(0), 0).iter() {
            assert!((v - 2.0).abs() < 1e-9);
        }
    }
}

#[test]
fn batch_norm_normalized_input_passes_through() {
    let mut r = rng(20);
    let mut bn = CBatchNorm2d::<f64>::new(3);
    let mut x = rand_c4(&mut r, (4, 3, 5, 5));
    // pre-normalize each channel to exactly zero mean / unit biased variance
    for part in [&mut x.re, &mut x.im] {
        for c in 0..3 {
            let mut ch = part.index_axis_mut(Axis(1), c);
            let n = ch.len() as f64;
            let m = ch.sum() / n;
            let v = ch.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
            ch.mapv_inplace(|x| (x - m) / v.sqrt());
        }
    }
    let y = bn.forward(&x, true).unwrap();
    // eps shifts the scale by sqrt(1/(1+1e-5))
    assert!(rel_err4(&y.re, &x.re) < 1e-5);
    assert!(rel_err4(&y.im, &x.im) < 1e-5);
}

#[test]
fn batch_norm_output_statistics() {
    let mut r = rng(21);
    let mut bn = CBatchNorm2d::<f64>::new(4);
    let x = rand_c4(&mut r, (3, 4, 6, 7));
    let y = bn.forward(&x, true).unwrap();
    for part in [&y.re, &y.im] {
        for c in 0..4 {
            let ch = part.index_axis(Axis(1), c);
            let n = ch.len() as f64;
            let mean = ch.sum() / n;
            let var = ch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-6, "channel mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "channel var {var}");
        }
    }
}

#[test]
fn batch_norm_gradients_match_finite_differences() {
    let mut r = rng(22);
    let mut bn = CBatchNorm2d::<f64>::new(2);
    // non-trivial affine
    bn.bn_re.gamma.data.assign(&Array1::from_vec(vec![1.3, 0.7]));
    bn.bn_im.beta.data.assign(&Array1::from_vec(vec![-0.2, 0.4]));
    let x = rand_c4(&mut r, (2, 2, 4, 3));
    let proj = rand_c4(&mut r, (2, 2, 4, 3));
    let loss = |m: &mut CBatchNorm2d<f64>, x: &CArr4<f64>| -> f64 {
        let y = m.forward(x, true).unwrap();
        (&y.re * &proj.re).sum() + (&y.im * &proj.im).sum()
    };
    bn.zero_grad();
    let _ = loss(&mut bn, &x);
    let gx = bn.backward(&proj);
    let rep = finite_difference_check(&mut bn, |m| loss(m, &x), 1e-5, 100, 46);
    assert!(rep.max_rel_err < 1e-4, "affine grad err {}", rep.max_rel_err);

    let mut flat: Vec<f64> = x.re.iter().chain(x.im.iter()).cloned().collect();
    let analytic: Vec<f64> = gx.re.iter().chain(gx.im.iter()).cloned().collect();
    let dim = x.re.raw_dim();
    let n = x.re.len();
    let rep = finite_difference_input_check(
        &mut flat,
        &analytic,
        |v| {
            let xx = CArr4 {
                re: Array4::from_shape_vec(dim.clone(), v[..n].to_vec()).unwrap(),
                im: Array4::from_shape_vec(dim.clone(), v[n..].to_vec()).unwrap(),
            };
            loss(&mut bn, &xx)
        },
        1e-5,
        100,
        47,
    );
    assert!(rep.max_rel_err < 1e-4, "input grad err {}", rep.max_rel_err);
}

// ---------------------------------------------------------------------------
// complex_relu
// ---------------------------------------------------------------------------

#[test]
fn crelu_clamps_each_part() {
    let x = CArr4 {
        re: Array4::from_elem((1, 1, 1, 1), -1.0),
        im: Array4::from_elem((1, 1, 1, 1), 2.0),
    };
    let y = reband::cplx::crelu(&x);
    assert_eq!(y.re[[0, 0, 0, 0]], 0.0);
    assert_eq!(y.im[[0, 0, 0, 0]], 2.0);
}

#[test]
fn crelu_is_identity_on_nonnegative_and_idempotent() {
    let mut r = rng(30);
    let x = rand_c4(&mut r, (2, 3, 4, 4));
    let pos = CArr4 {
        re: x.re.mapv(f64::abs),
        im: x.im.mapv(f64::abs),
    };
    let y = reband::cplx::crelu(&pos);
    assert_eq!(y.re, pos.re);
    let once = reband::cplx::crelu(&x);
    let twice = reband::cplx::crelu(&once);
    assert_eq!(once.re, twice.re);
    assert_eq!(once.im, twice.im);
}

#[test]
fn crelu_gradient_matches_finite_differences() {
    let mut r = rng(31);
    // keep entries away from the kink at zero
    let x = CArr4 {
        re: rand_arr4(&mut r, (1, 2, 4, 4)).mapv(|v| if v.abs() < 0.1 { v + 0.2 } else { v }),
        im: rand_arr4(&mut r, (1, 2, 4, 4)).mapv(|v| if v.abs() < 0.1 { v - 0.2 } else { v }),
    };
    let proj = rand_c4(&mut r, (1, 2, 4, 4));
    let mut act = CRelu::new();
    let _ = act.forward(&x, true);
    let gx = act.backward(&proj);
    // analytic gradient: proj where input > 0 else 0
    for ((g, xv), p) in gx.re.iter().zip(x.re.iter()).zip(proj.re.iter()) {
        let want = if *xv > 0.0 { *p } else { 0.0 };
        assert_eq!(*g, want);
    }
    let mut flat: Vec<f64> = x.re.iter().chain(x.im.iter()).cloned().collect();
    let analytic: Vec<f64> = gx.re.iter().chain(gx.im.iter()).cloned().collect();
    let dim = x.re.raw_dim();
    let n = x.re.len();
    let rep = finite_difference_input_check(
        &mut flat,
        &analytic,
        |v| {
            let xx = CArr4 {
                re: Array4::from_shape_vec(dim.clone(), v[..n].to_vec()).unwrap(),
                im: Array4::from_shape_vec(dim.clone(), v[n..].to_vec()).unwrap(),
            };
            let y = reband::cplx::crelu(&xx);
            (&y.re * &proj.re).sum() + (&y.im * &proj.im).sum()
        },
        1e-5,
        80,
        48,
    );
    assert!(rep.max_rel_err < 1e-4);
}

// ---------------------------------------------------------------------------
// complex_linear
// ---------------------------------------------------------------------------

#[test]
fn linear_identity_and_j_matrix() {
    let mut r = rng(40);
    let d = 4;
    let mut lin = CLinear::<f64>::new(d, d, false, &mut r);
    lin.w.re.data.assign(&Array2::eye(d));
    lin.w.im.data.fill(0.0);
    let x = CArr2 {
        re: Array2::from_shape_simple_fn((3, d), || r.gen_range(-1.0..1.0)),
        im: Array2::from_shape_simple_fn((3, d), || r.gen_range(-1.0..1.0)),
    };
    let y = lin.forward(&x, false).unwrap();
    assert_eq!(y.re, x.re);
    assert_eq!(y.im, x.im);

    lin.w.re.data.fill(0.0);
    lin.w.im.data.assign(&Array2::eye(d));
    let y = lin.forward(&x, false).unwrap();
    assert_eq!(y.re, x.im.mapv(|v| -v));
    assert_eq!(y.im, x.re);
}

#[test]
fn linear_matches_complex_dot_oracle() {
    let mut r = rng(41);
    let mut lin = CLinear::<f64>::new(4, 4, false, &mut r);
    let x = CArr2 {
        re: Array2::from_shape_simple_fn((4, 4), || r.gen_range(-1.0..1.0)),
        im: Array2::from_shape_simple_fn((4, 4), || r.gen_range(-1.0..1.0)),
    };
    let y = lin.forward(&x, false).unwrap();
    for row in 0..4 {
        for o in 0..4 {
            let (mut ar, mut ai) = (0.0, 0.0);
            for i in 0..4 {
                let (xr, xi) = (x.re[[row, i]], x.im[[row, i]]);
                let (wr, wi) = (lin.w.re.data[[o, i]], lin.w.im.data[[o, i]]);
                ar += xr * wr - xi * wi;
                ai += xr * wi + xi * wr;
            }
            assert!((y.re[[row, o]] - ar).abs() / ar.abs().max(1e-9) < 1e-6);
            assert!((y.im[[row, o]] - ai).abs() / ai.abs().max(1e-9) < 1e-6);
        }
    }
}

#[test]
fn linear_rejects_dim_mismatch() {
    let mut r = rng(42);
    let mut lin = CLinear::<f64>::new(4, 2, false, &mut r);
    let x = CArr2 {
        re: Array2::zeros((1, 3)),
        im: Array2::zeros((1, 3)),
    };
    assert!(lin.forward(&x, false).is_err());
}

#[test]
fn linear_gradients_match_finite_differences() {
    let mut r = rng(43);
    let mut lin = CLinear::<f64>::new(5, 3, true, &mut r);
    let x = CArr2 {
        re: Array2::from_shape_simple_fn((4, 5), || r.gen_range(-1.0..1.0)),
        im: Array2::from_shape_simple_fn((4, 5), || r.gen_range(-1.0..1.0)),
    };
    let proj = CArr2 {
        re: Array2::from_shape_simple_fn((4, 3), || r.gen_range(-1.0..1.0)),
        im: Array2::from_shape_simple_fn((4, 3), || r.gen_range(-1.0..1.0)),
    };
    let loss = |m: &mut CLinear<f64>, x: &CArr2<f64>| -> f64 {
        let y = m.forward(x, true).unwrap();
        (&y.re * &proj.re).sum() + (&y.im * &proj.im).sum()
    };
    lin.zero_grad();
    let _ = loss(&mut lin, &x);
    let gx = lin.backward(&proj);
    let rep = finite_difference_check(&mut lin, |m| loss(m, &x), 1e-5, 100, 49);
    assert!(rep.max_rel_err < 1e-4);

    let mut flat: Vec<f64> = x.re.iter().chain(x.im.iter()).cloned().collect();
    let analytic: Vec<f64> = gx.re.iter().chain(gx.im.iter()).cloned().collect();
    let n = x.re.len();
    let rep = finite_difference_input_check(
        &mut flat,
        &analytic,
        |v| {
            let xx = CArr2 {
                re: Array2::from_shape_vec((4, 5), v[..n].to_vec()).unwrap(),
                im: Array2::from_shape_vec((4, 5), v[n..].to_vec()).unwrap(),
            };
            loss(&mut lin, &xx)
        },
        1e-5,
        80,
        50,
    );
    assert!(rep.max_rel_err < 1e-4);
}

// ---------------------------------------------------------------------------
// complex_mhsa
// ---------------------------------------------------------------------------

fn rand_c3(r: &mut ChaCha8Rng, d: (usize, usize, usize)) -> CArr3<f64> {
    CArr3 {
        re: Array3::from_shape_simple_fn(d, || r.gen_range(-1.0..1.0)),
        im: Array3::from_shape_simple_fn(d, || r.gen_range(-1.0..1.0)),
    }
}

#[test]
fn mhsa_rejects_indivisible_heads() {
    let mut r = rng(50);
    assert!(CMhsa::<f64>::new(6, 4, &mut r).is_err());
}

#[test]
fn mhsa_single_position_is_projection_of_v() {
    let mut r = rng(51);
    let mut att = CMhsa::<f64>::new(8, 2, &mut r).unwrap();
    let x = rand_c3(&mut r, (1, 1, 8));
    let y = att.forward(&x, false).unwrap();
    // with one key, softmax weight is exactly 1, so out = Wo(Wv x)
    let flat = |a: &Array3<f64>| {
        Array2::from_shape_vec((1, 8), a.iter().cloned().collect::<Vec<_>>()).unwrap()
    };
    let x2 = CArr2 {
        re: flat(&x.re),
        im: flat(&x.im),
    };
    let v = att.wv.forward(&x2, false).unwrap();
    let want = att.wo.forward(&v, false).unwrap();
    for (a, b) in y.re.iter().zip(want.re.iter()) {
        assert!((a - b).abs() < 1e-9);
    }
    for (a, b) in y.im.iter().zip(want.im.iter()) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn mhsa_is_permutation_equivariant() {
    let mut r = rng(52);
    let mut att = CMhsa::<f64>::new(8, 2, &mut r).unwrap();
    let t = 6;
    let x = rand_c3(&mut r, (1, t, 8));
    let perm = [3usize, 0, 5, 1, 4, 2];
    let mut xp = CArr3::zeros((1, t, 8));
    for (dst, &src) in perm.iter().enumerate() {
        xp.re
            .slice_mut(ndarray::s![0, dst, ..])
            .assign(&x.re.slice(ndarray::s![0, src, ..]));
        xp.im
            .slice_mut(ndarray::s![0, dst, ..])
            .assign(&x.im.slice(ndarray::s![0, src, ..]));
    }
    let y = att.forward(&x, false).unwrap();
    let yp = att.forward(&xp, false).unwrap();
    for (dst, &src) in perm.iter().enumerate() {
        for d in 0..8 {
            assert!((yp.re[[0, dst, d]] - y.re[[0, src, d]]).abs() < 1e-9);
            assert!((yp.im[[0, dst, d]] - y.im[[0, src, d]]).abs() < 1e-9);
        }
    }
}

#[test]
fn mhsa_attention_rows_sum_to_one() {
    let mut r = rng(53);
    let mut att = CMhsa::<f64>::new(8, 4, &mut r).unwrap();
    let x = rand_c3(&mut r, (2, 5, 8));
    let _ = att.forward(&x, true).unwrap();
    let a = att.last_attention().unwrap();
    for bi in 0..2 {
        for h in 0..4 {
            for i in 0..5 {
                let s: f64 = (0..5).map(|j| a[[bi, h, i, j]]).sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn mhsa_gradients_match_finite_differences() {
    let mut r = rng(54);
    let mut att = CMhsa::<f64>::new(6, 2, &mut r).unwrap();
    let x = rand_c3(&mut r, (1, 4, 6));
    let proj = rand_c3(&mut r, (1, 4, 6));
    let loss = |m: &mut CMhsa<f64>, x: &CArr3<f64>| -> f64 {
        let y = m.forward(x, true).unwrap();
        (&y.re * &proj.re).sum() + (&y.im * &proj.im).sum()
    };
    att.zero_grad();
    let _ = loss(&mut att, &x);
    let gx = att.backward(&proj);
    let rep = finite_difference_check(&mut att, |m| loss(m, &x), 1e-5, 150, 51);
    assert!(rep.max_rel_err < 1e-4, "param grad err {}", rep.max_rel_err);

    let mut flat: Vec<f64> = x.re.iter().chain(x.im.iter()).cloned().collect();
    let analytic: Vec<f64> = gx.re.iter().chain(gx.im.iter()).cloned().collect();
    let n = x.re.len();
    let rep = finite_difference_input_check(
        &mut flat,
        &analytic,
        |v| {
            let xx = CArr3 {
                re: Array3::from_shape_vec((1, 4, 6), v[..n].to_vec()).unwrap(),
                im: Array3::from_shape_vec((1, 4, 6), v[n..].to_vec()).unwrap(),
            };
            loss(&mut att, &xx)
        },
        1e-5,
        72,
        52,
    );
    assert!(rep.max_rel_err < 1e-4, "input grad err {}", rep.max_rel_err);
}
