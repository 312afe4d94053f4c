//! Per-video-frame visual feature tracks.
//!
//! Synthetic tracks stand in for lip features: each frame is a fixed random
//! projection of the clean signal's log band envelopes over that frame's
//! span, plus a little noise. They therefore carry information about the
//! target talker and none about the interferer.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};

use super::seed::rng_for;
use crate::dsp::{band_envelopes, stft, thirdoct, StftConfig, Waveform, WindowKind};
use crate::error::{Error, Result};

pub const DEFAULT_FPS: f64 = 25.0;
const NOISE_STD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct VisualFeatureTrack {
    /// `frames x dim`.
    pub features: Array2<f64>,
    pub frame_rate: f64,
}

impl VisualFeatureTrack {
    pub fn new(features: Array2<f64>, frame_rate: f64) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::InvalidArgument("visual track is empty".into()));
        }
        if !(frame_rate > 0.0) || !frame_rate.is_finite() {
            return Err(Error::InvalidArgument("frame rate must be positive".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite visual feature".into()));
        }
        Ok(Self { features, frame_rate })
    }

    /// All-zero track, the stand-in used for audio-only operation.
    pub fn zeros(frames: usize, dim: usize, frame_rate: f64) -> Result<Self> {
        Self::new(Array2::zeros((frames, dim)), frame_rate)
    }

    pub fn num_frames(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

/// Number of video frames covering a signal of `len` samples.
pub fn video_frames(len: usize, sample_rate: u32, fps: f64) -> usize {
    ((len as f64 * fps / f64::from(sample_rate)) - 1e-9).ceil().max(1.0) as usize
}

/// Synthetic track for `clean`. `projection_seed` fixes the projection
/// matrix (shared across a corpus); `noise_seed` varies per utterance.
pub fn synth_visual_features(
    clean: &Waveform,
    dim: usize,
    fps: f64,
    projection_seed: u64,
    noise_seed: u64,
) -> Result<VisualFeatureTrack> {
    if dim == 0 {
        return Err(Error::InvalidArgument("feature dimension must be positive".into()));
    }
    if !(fps > 0.0) {
        return Err(Error::InvalidArgument("frame rate must be positive".into()));
    }
    let rate = clean.sample_rate();
    let frame_len = (0.025 * f64::from(rate)).round() as usize;
    let hop = (0.010 * f64::from(rate)).round() as usize;
    let fft = frame_len.next_power_of_two();
    let cfg = StftConfig::new(frame_len, hop, fft, WindowKind::Hann)?;
    let obm = thirdoct(rate, fft, 15, 150.0)?;
    let env = band_envelopes(&stft(clean, &cfg)?.magnitude(), &obm)?.mapv(f64::ln_1p);
    let (bands, audio_frames) = env.dim();

    let mut proj_rng = rng_for(&[0x7150, projection_seed]);
    let scale = 1.0 / (bands as f64).sqrt();
    let projection = Array2::from_shape_simple_fn((dim, bands), || {
        let z: f64 = StandardNormal.sample(&mut proj_rng);
        z * scale
    });

    let frames = video_frames(clean.len(), rate, fps);
    let mut noise_rng = rng_for(&[0x7151, noise_seed]);
    let mut features = Array2::zeros((frames, dim));
    let hop_s = hop as f64 / f64::from(rate);
    let centre = |m: usize| (m * hop + frame_len / 2) as f64 / f64::from(rate);
    for k in 0..frames {
        let (t0, t1) = (k as f64 / fps, (k + 1) as f64 / fps);
        let inside: Vec<usize> = (0..audio_frames).filter(|&m| (t0..t1).contains(&centre(m))).collect();
        let span = if inside.is_empty() {
            let m = ((t0 / hop_s).round() as usize).min(audio_frames - 1);
            vec![m]
        } else {
            inside
        };
        let mut avg = vec![0.0; bands];
        for &m in &span {
            for (b, a) in avg.iter_mut().enumerate() {
                *a += env[[b, m]] / span.len() as f64;
            }
        }
        for d in 0..dim {
            let clean_part: f64 = (0..bands).map(|b| projection[[d, b]] * avg[b]).sum();
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            // Stored as 32-bit floats on disk; keep memory and disk identical.
            features[[k, d]] = (clean_part + NOISE_STD * z) as f32 as f64;
        }
    }
    VisualFeatureTrack::new(features, fps)
}

/// Writes the binary container: `u32` frame count, `u32` dimension, then
/// row-major little-endian `f32` values.
pub fn write_features(track: &VisualFeatureTrack, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (frames, dim) = track.features.dim();
    let mut buf = Vec::with_capacity(8 + 4 * frames * dim);
    buf.extend_from_slice(&(frames as u32).to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    for v in track.features.iter() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: impl AsRef<Path>, frame_rate: f64) -> Result<VisualFeatureTrack> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let malformed = |reason: String| Error::Manifest(format!("{}: {reason}", path.display()));
    if bytes.len() < 8 {
        return Err(malformed("feature file shorter than its header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let (frames, dim) = (word(0) as usize, word(4) as usize);
    let expected = 8 + 4 * frames * dim;
    if bytes.len() != expected {
        return Err(malformed(format!(
            "expected {expected} bytes for {frames} x {dim} features, found {}",
            bytes.len()
        )));
    }
    let values = bytes[8..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    let features = Array2::from_shape_vec((frames, dim), values).map_err(|e| malformed(e.to_string()))?;
    VisualFeatureTrack::new(features, frame_rate)
}
