//! Spectral analysis of 16 kHz speech.

use crate::dsp::{stft, Spectrogram, StftConfig, Waveform};
use crate::error::{Error, Result};

pub const FEATURE_SAMPLE_RATE: u32 = 16_000;

/// Complex STFT with 25 ms frames, 10 ms hop and a 512-point FFT; magnitude
/// and phase are both available from the result.
pub fn extract_features(wav: &Waveform) -> Result<Spectrogram> {
    if wav.sample_rate() != FEATURE_SAMPLE_RATE {
        return Err(Error::SampleRateMismatch {
            expected: FEATURE_SAMPLE_RATE,
            found: wav.sample_rate(),
        });
    }
    stft(wav, &StftConfig::SPEECH_16K)
}
