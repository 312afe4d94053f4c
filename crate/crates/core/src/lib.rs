//! Intelligibility-oriented audio-visual speech enhancement.
//!
//! The crate is organised bottom-up:
//!
//! * [`dsp`]: windows, STFT/ISTFT, resampling, silent-frame removal and
//!   one-third octave band analysis.
//! * [`metrics`]: STOI, extended STOI, their spectrogram-domain variants,
//!   SI-SDR and Pearson correlation.
//! * [`autograd`]: a small reverse-mode differentiation tape.
//! * [`losses`]: MSE, MAE and the differentiable STOI objective.
//! * [`model`]: the audio-visual mask estimator, ideal ratio mask, training.
//! * [`data`]: WAV I/O, synthetic speakers, mixing, features, manifests.
//! * [`harness`]: the experiments driven by the `avse` command line tool.

pub mod autograd;
pub mod data;
pub mod dsp;
pub mod error;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod model;

pub use dsp::{MagnitudeSpectrogram, Spectrogram, StftConfig, Waveform, WindowKind};
pub use error::{Error, ErrorCategory, Result};
pub use metrics::{MetricScore, StoiConfig, StoiVariant};
