//! C ABI for the speech-reconstruction toolkit.
//!
//! Conventions:
//! - every function returns a `RebandStatus` code; outputs go through
//!   pointers supplied by the caller,
//! - the model handle is opaque; create with [`reband_model_load`], destroy
//!   with [`reband_model_free`],
//! - waveforms are mono f32 at 8 kHz,
//! - the header `include/reband.h` is generated by cbindgen at build time.

use std::ffi::CStr;
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use reband::metrics;
use reband::train::{load_checkpoint, Trainer};
use reband::RebandError;

/// Status codes returned by every FFI entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RebandStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Invalid configuration or argument values.
    InvalidConfig = 2,
    /// Unreadable or malformed data (file, checkpoint, waveform).
    Data = 3,
    /// Numeric failure (non-finite values).
    Numeric = 4,
    /// Internal panic caught at the boundary.
    Panic = 5,
}

fn status_of(e: &RebandError) -> RebandStatus {
    match e.exit_code() {
        2 => RebandStatus::InvalidConfig,
        4 => RebandStatus::Numeric,
        _ => RebandStatus::Data,
    }
}

/// Opaque handle to a loaded model checkpoint.
pub struct RebandModel {
    trainer: Trainer,
}

fn guard<F: FnOnce() -> RebandStatus>(f: F) -> RebandStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(RebandStatus::Panic)
}

/// Load a checkpoint file into a model handle.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn reband_model_load(
    path: *const c_char,
    out: *mut *mut RebandModel,
) -> RebandStatus {
    if path.is_null() || out.is_null() {
        return RebandStatus::NullArgument;
    }
    guard(|| {
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return RebandStatus::InvalidConfig;
        };
        let ckpt = match load_checkpoint(std::path::Path::new(path)) {
            Ok(c) => c,
            Err(e) => return status_of(&e),
        };
        let cfg = reband::train::TrainConfig {
            stft: ckpt.stft,
            loss: reband::loss::LossConfig::default(),
            optim: ckpt.adam,
            batch_size: 1,
            steps: ckpt.step,
            seed: ckpt.seed,
            checkpoint_every: 1,
            crop_len: None,
            identity_init: true,
        };
        match Trainer::from_checkpoint(std::path::Path::new(path), cfg) {
            Ok(trainer) => {
                *out = Box::into_raw(Box::new(RebandModel { trainer }));
                RebandStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Destroy a model handle. Null is a no-op.
///
/// # Safety
/// `model` must be a pointer previously returned by [`reband_model_load`].
#[no_mangle]
pub unsafe extern "C" fn reband_model_free(model: *mut RebandModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of trainable real-valued parameters in the loaded model.
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn reband_model_param_count(
    model: *mut RebandModel,
    out: *mut usize,
) -> RebandStatus {
    if model.is_null() || out.is_null() {
        return RebandStatus::NullArgument;
    }
    guard(|| {
        use reband::cplx::Params;
        *out = (*model).trainer.model.param_count();
        RebandStatus::Ok
    })
}

/// Reconstruct a waveform in place of the caller's output buffer, which must
/// hold `len` samples; the output length equals the input length.
///
/// # Safety
/// `input` and `output` must point to `len` readable/writable f32 values.
#[no_mangle]
pub unsafe extern "C" fn reband_reconstruct(
    model: *mut RebandModel,
    input: *const f32,
    len: usize,
    output: *mut f32,
) -> RebandStatus {
    if model.is_null() || input.is_null() || output.is_null() {
        return RebandStatus::NullArgument;
    }
    guard(|| {
        let x = std::slice::from_raw_parts(input, len);
        match (*model).trainer.reconstruct(x) {
            Ok(y) => {
                std::slice::from_raw_parts_mut(output, len).copy_from_slice(&y);
                RebandStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

unsafe fn metric2(
    reference: *const f32,
    estimate: *const f32,
    len: usize,
    out: *mut f64,
    f: impl Fn(&[f64], &[f64]) -> reband::Result<f64>,
) -> RebandStatus {
    if reference.is_null() || estimate.is_null() || out.is_null() {
        return RebandStatus::NullArgument;
    }
    guard(|| {
        let r: Vec<f64> = std::slice::from_raw_parts(reference, len)
            .iter()
            .map(|v| *v as f64)
            .collect();
        let e: Vec<f64> = std::slice::from_raw_parts(estimate, len)
            .iter()
            .map(|v| *v as f64)
            .collect();
        match f(&r, &e) {
            Ok(v) => {
                *out = v;
                RebandStatus::Ok
            }
            Err(err) => status_of(&err),
        }
    })
}

/// Log-spectral distance between two 8 kHz waveforms of equal length.
///
/// # Safety
/// `reference` and `estimate` must point to `len` f32 values; `out` must be
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn reband_lsd(
    reference: *const f32,
    estimate: *const f32,
    len: usize,
    out: *mut f64,
) -> RebandStatus {
    metric2(reference, estimate, len, out, |r, e| metrics::lsd(r, e))
}

/// Scale-invariant SDR in dB between two 8 kHz waveforms of equal length.
///
/// # Safety
/// As for [`reband_lsd`].
#[no_mangle]
pub unsafe extern "C" fn reband_si_sdr(
    reference: *const f32,
    estimate: *const f32,
    len: usize,
    out: *mut f64,
) -> RebandStatus {
    metric2(reference, estimate, len, out, |r, e| metrics::si_sdr(r, e))
}

/// STOI between two 8 kHz waveforms of equal length (>= 384 ms of active
/// signal).
///
/// # Safety
/// As for [`reband_lsd`].
#[no_mangle]
pub unsafe extern "C" fn reband_stoi(
    reference: *const f32,
    estimate: *const f32,
    len: usize,
    out: *mut f64,
) -> RebandStatus {
    metric2(reference, estimate, len, out, |r, e| {
        metrics::stoi(r, e, 8000)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use reband::model::{BottleneckKind, CuabPlacement, ModelConfig};
    use reband::stft::StftConfig;
    use reband::synth::pseudo_speech;
    use reband::train::{save_checkpoint, OptimConfig, TrainConfig, Trainer};

    fn checkpoint_file(dir: &std::path::Path) -> std::path::PathBuf {
        let mc = ModelConfig {
            in_freq: 16,
            time_frames: 33,
            widths: [2, 2, 2, 2, 4, 4, 4, 4],
            enc_kernel: (5, 3),
            skip_kernel: 3,
            cuab_kernel: 3,
            cuab: CuabPlacement::None,
            bottleneck: BottleneckKind::Conformer,
            depth: 1,
            heads: 2,
            ff_mult: 2,
            conv_kernel: 7,
            skips_enabled: true,
            seed: 5,
        };
        let cfg = TrainConfig {
            stft: StftConfig::new(32, 16, 32).unwrap(),
            loss: reband::loss::LossConfig::default(),
            optim: OptimConfig::default(),
            batch_size: 1,
            steps: 0,
            seed: 5,
            checkpoint_every: 1,
            crop_len: None,
            identity_init: true,
        };
        let mut t = Trainer::new(mc, cfg).unwrap();
        let path = dir.join("model.bin");
        save_checkpoint(&t.checkpoint(), &path).unwrap();
        path
    }

    #[test]
    fn load_reconstruct_free_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = checkpoint_file(dir.path());
        let cpath = std::ffi::CString::new(path.to_str().unwrap()).unwrap();

        let mut handle: *mut RebandModel = std::ptr::null_mut();
        let st = unsafe { reband_model_load(cpath.as_ptr(), &mut handle) };
        assert_eq!(st, RebandStatus::Ok);
        assert!(!handle.is_null());

        let mut count = 0usize;
        assert_eq!(
            unsafe { reband_model_param_count(handle, &mut count) },
            RebandStatus::Ok
        );
        assert!(count > 0);

        let x: Vec<f32> = pseudo_speech(512, 8000, 0.0)
            .iter()
            .map(|v| *v as f32)
            .collect();
        let mut y = vec![0.0f32; x.len()];
        let st = unsafe { reband_reconstruct(handle, x.as_ptr(), x.len(), y.as_mut_ptr()) };
        assert_eq!(st, RebandStatus::Ok);
        assert!(y.iter().any(|v| *v != 0.0));
        unsafe { reband_model_free(handle) };
    }

    #[test]
    fn metrics_match_native_and_flag_errors() {
        let r: Vec<f32> = pseudo_speech(32000, 8000, 1.0)
            .iter()
            .map(|v| *v as f32)
            .collect();
        let e: Vec<f32> = r.iter().map(|v| 0.5 * v).collect();
        let mut v = 0.0f64;
        assert_eq!(
            unsafe { reband_lsd(r.as_ptr(), e.as_ptr(), r.len(), &mut v) },
            RebandStatus::Ok
        );
        let rd: Vec<f64> = r.iter().map(|x| *x as f64).collect();
        let ed: Vec<f64> = e.iter().map(|x| *x as f64).collect();
        assert!((v - metrics::lsd(&rd, &ed).unwrap()).abs() < 1e-12);

        assert_eq!(
            unsafe { reband_si_sdr(r.as_ptr(), e.as_ptr(), r.len(), &mut v) },
            RebandStatus::Ok
        );
        assert_eq!(v, 100.0); // scale invariance

        assert_eq!(
            unsafe { reband_stoi(r.as_ptr(), e.as_ptr(), r.len(), &mut v) },
            RebandStatus::Ok
        );
        assert!((v - 1.0).abs() < 1e-6);

        // Zero reference -> config error; null pointer -> null status.
        let z = vec![0.0f32; 512];
        assert_eq!(
            unsafe { reband_si_sdr(z.as_ptr(), z.as_ptr(), z.len(), &mut v) },
            RebandStatus::InvalidConfig
        );
        assert_eq!(
            unsafe { reband_lsd(std::ptr::null(), e.as_ptr(), 4, &mut v) },
            RebandStatus::NullArgument
        );
    }

    #[test]
    fn bad_checkpoint_path_reports_data_error() {
        let c = std::ffi::CString::new("/nonexistent/file.bin").unwrap();
        let mut handle: *mut RebandModel = std::ptr::null_mut();
        let st = unsafe { reband_model_load(c.as_ptr(), &mut handle) };
        assert_eq!(st, RebandStatus::Data);
        assert!(handle.is_null());
    }

    #[test]
    fn generated_header_exists_and_declares_the_api() {
        let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/reband.h");
        let text = std::fs::read_to_string(&header).expect("cbindgen header");
        for sym in [
            "reband_model_load",
            "reband_model_free",
            "reband_reconstruct",
            "reband_lsd",
            "reband_si_sdr",
            "reband_stoi",
            "RebandStatus",
            "RebandModel",
        ] {
            assert!(text.contains(sym), "header missing {sym}");
        }
    }
}
