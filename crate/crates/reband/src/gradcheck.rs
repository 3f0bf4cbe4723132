//! Central finite-difference gradient verification.
//!
//! The caller runs its own forward/backward first so that analytic gradients
//! are sitting in the parameter `grad` buffers, then calls
//! [`finite_difference_check`] with a closure that recomputes the scalar loss.

use crate::cplx::Params;
use crate::scalar::Scalar;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    pub worst_index: usize,
}

fn perturb<T: Scalar, M: Params<T> + ?Sized>(m: &mut M, idx: usize, delta: T) {
    let mut off = 0usize;
    m.visit_params(&mut |d, _g| {
        if idx >= off && idx < off + d.len() {
            d[idx - off] += delta;
        }
        off += d.len();
    });
}

fn snapshot_grads<T: Scalar, M: Params<T> + ?Sized>(m: &mut M) -> Vec<T> {
    let mut g = Vec::new();
    m.visit_params(&mut |_d, gr| g.extend_from_slice(gr));
    g
}

/// Compare analytic parameter gradients against central finite differences.
///
/// `sample` parameter entries are drawn deterministically from `seed`
/// (all entries when `sample >= param_count`).
pub fn finite_difference_check<T: Scalar, M: Params<T> + ?Sized>(
    m: &mut M,
    mut loss: impl FnMut(&mut M) -> T,
    step: f64,
    sample: usize,
    seed: u64,
) -> GradCheckReport {
    let analytic = snapshot_grads(m);
    let total = analytic.len();
    let mut indices: Vec<usize> = (0..total).collect();
    if sample < total {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        indices.truncate(sample);
    }
    let h = T::of(step);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: indices.len(),
        worst_index: 0,
    };
    for &i in &indices {
        perturb(m, i, h);
        let lp = loss(m).to_f64();
        perturb(m, i, -(h + h));
        let lm = loss(m).to_f64();
        perturb(m, i, h);
        let fd = (lp - lm) / (2.0 * step);
        let g = analytic[i].to_f64();
        let denom = fd.abs().max(g.abs());
        if denom < 1e-7 {
            continue;
        }
        let rel = (fd - g).abs() / denom;
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_index = i;
        }
    }
    report
}

/// Finite-difference check of a loss gradient with respect to an input
/// vector rather than model parameters.
pub fn finite_difference_input_check<T: Scalar>(
    x: &mut [T],
    analytic: &[T],
    mut loss: impl FnMut(&[T]) -> T,
    step: f64,
    sample: usize,
    seed: u64,
) -> GradCheckReport {
    let total = x.len();
    let mut indices: Vec<usize> = (0..total).collect();
    if sample < total {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        indices.truncate(sample);
    }
    let h = T::of(step);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: indices.len(),
        worst_index: 0,
    };
    for &i in &indices {
        let orig = x[i];
        x[i] = orig + h;
        let lp = loss(x).to_f64();
        x[i] = orig - h;
        let lm = loss(x).to_f64();
        x[i] = orig;
        let fd = (lp - lm) / (2.0 * step);
        let g = analytic[i].to_f64();
        let denom = fd.abs().max(g.abs());
        if denom < 1e-7 {
            continue;
        }
        let rel = (fd - g).abs() / denom;
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_index = i;
        }
    }
    report
}
