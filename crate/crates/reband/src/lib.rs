//! Complex-valued speech reconstruction from aliased, transient-noise-corrupted
//! low-rate captures.
//!
//! The crate provides:
//! - complex-valued differentiable network building blocks ([`cplx`]),
//! - STFT / inverse STFT with exact adjoints ([`stft`]),
//! - a complex U-Net with conformer bottleneck and unified T-F attention
//!   blocks ([`model`]),
//! - the complex multi-resolution STFT training loss ([`loss`]),
//! - a capture-channel degradation simulator ([`degrade`]),
//! - objective metrics (LSD, SI-SDR, STOI) and evaluation reports
//!   ([`metrics`]),
//! - training, checkpointing and the CLI plumbing ([`train`], [`run`]).

pub mod audio;
pub mod cplx;
pub mod ctensor;
pub mod degrade;
pub mod dsp;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod run;
pub mod scalar;
pub mod stft;
pub mod synth;
pub mod train;

pub use ctensor::{CArr, CArr2, CArr3, CArr4, CArrD};
pub use error::{RebandError, Result};
pub use scalar::Scalar;
