//! Deterministic inputs shared by the criterion benchmarks in `benches/`.

use avse_core::dsp::stft;
use avse_core::{MagnitudeSpectrogram, StftConfig, Waveform};
use ndarray::Array2;

fn lcg(seed: u64, n: usize) -> Vec<f64> {
    let mut state = seed;
    (0..n)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}

/// A voiced, amplitude-modulated tone and a noisy copy of it at 16 kHz.
pub fn speech_pair(secs: f64) -> (Waveform, Waveform) {
    let sr = 16_000;
    let n = (secs * f64::from(sr)) as usize;
    let clean: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / f64::from(sr);
            let env = (2.0 * std::f64::consts::PI * 3.5 * t).sin().powi(2);
            env * (1..8).map(|h| (2.0 * std::f64::consts::PI * 130.0 * h as f64 * t).sin() / h as f64).sum::<f64>()
        })
        .collect();
    let noisy = clean.iter().zip(lcg(9, n)).map(|(c, e)| c + 0.3 * e).collect();
    (Waveform::new(clean, sr).unwrap(), Waveform::new(noisy, sr).unwrap())
}

pub fn magnitudes(wav: &Waveform) -> MagnitudeSpectrogram {
    stft(wav, &StftConfig::SPEECH_16K).unwrap().magnitude()
}

/// A `frames x dim` visual feature matrix with values in [-1, 1].
pub fn visual(frames: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_vec((frames, dim), lcg(17, frames * dim)).unwrap()
}
