//! Signal-processing primitives shared by the metrics, the model and the
//! data pipeline.

mod bands;
mod resample;
mod silence;
mod stft;
mod waveform;
mod window;

pub use bands::{band_envelopes, segment_envelopes, thirdoct, EnvelopeSegments, OctaveBandMatrix};
pub(crate) use bands::band_envelopes_raw;
pub use resample::{resample, resample_with, ResamplerDesign};
pub use silence::{active_frames, remove_silent_frames, remove_silent_frames_with, SilenceParams};
pub use stft::{istft, stft, MagnitudeSpectrogram, Spectrogram, StftConfig};
pub use waveform::Waveform;
pub use window::{make_window, WindowKind};
