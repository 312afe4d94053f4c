//! Short-time Fourier analysis and weighted overlap-add synthesis.
//!
//! Frames start at multiples of the hop and are never padded at the end: a
//! signal of `len` samples yields `floor((len - frame_len) / hop) + 1` frames.
//! Synthesis divides the overlap-added, synthesis-windowed frames by the summed
//! squared window, so any window/hop pair whose squared-window sum stays away
//! from zero reconstructs the interior of an unmodified signal exactly.

use std::sync::Arc;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::window::{make_window, WindowKind};
use super::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: WindowKind,
}

impl StftConfig {
    /// 25 ms frames, 10 ms shift at 16 kHz, zero-padded to 512 points.
    pub const SPEECH_16K: StftConfig = StftConfig {
        frame_len: 400,
        hop: 160,
        fft_size: 512,
        window: WindowKind::Hann,
    };

    pub fn new(frame_len: usize, hop: usize, fft_size: usize, window: WindowKind) -> Result<Self> {
        let cfg = Self {
            frame_len,
            hop,
            fft_size,
            window,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0 < self.hop && self.hop <= self.frame_len && self.frame_len <= self.fft_size) {
            return Err(Error::InvalidArgument(format!(
                "stft config requires 0 < hop <= frame_len <= fft_size, got hop={} frame_len={} fft_size={}",
                self.hop, self.frame_len, self.fft_size
            )));
        }
        if self.frame_len < 2 {
            return Err(Error::InvalidArgument("frame_len must be at least 2".into()));
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.frame_len {
            0
        } else {
            (len - self.frame_len) / self.hop + 1
        }
    }

    pub fn output_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.frame_len
        }
    }

    /// Checks that the summed squared window over one hop period never
    /// vanishes, which is what weighted overlap-add needs to invert.
    pub fn check_cola(&self) -> Result<()> {
        self.validate()?;
        let w = make_window(self.window, self.frame_len)?;
        let mut sums = vec![0.0; self.hop];
        for (i, v) in w.iter().enumerate() {
            sums[i % self.hop] += v * v;
        }
        let max = sums.iter().cloned().fold(0.0, f64::max);
        let min = sums.iter().cloned().fold(f64::INFINITY, f64::min);
        if max <= 0.0 || min <= 1e-6 * max {
            return Err(Error::InvalidArgument(format!(
                "{} window of {} samples at hop {} violates the overlap-add condition",
                self.window, self.frame_len, self.hop
            )));
        }
        Ok(())
    }
}

/// Complex STFT, `bins` is F x T.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub bins: Array2<Complex64>,
    pub config: StftConfig,
    pub sample_rate: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrogram {
    pub mags: Array2<f64>,
    pub config: StftConfig,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn num_bins(&self) -> usize {
        self.bins.nrows()
    }

    pub fn num_frames(&self) -> usize {
        self.bins.ncols()
    }

    pub fn magnitude(&self) -> MagnitudeSpectrogram {
        MagnitudeSpectrogram {
            mags: self.bins.mapv(|c| c.norm()),
            config: self.config,
            sample_rate: self.sample_rate,
        }
    }

    /// Unit-modulus phase factors; zero bins get phase 1.
    pub fn phase(&self) -> Array2<Complex64> {
        self.bins.mapv(|c| {
            let n = c.norm();
            if n > 0.0 {
                c / n
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
    }

    /// Combines a magnitude grid with unit phase factors.
    pub fn from_magnitude_phase(
        mag: &MagnitudeSpectrogram,
        phase: &Array2<Complex64>,
    ) -> Result<Self> {
        if mag.mags.dim() != phase.dim() {
            return Err(Error::Shape(format!(
                "magnitude {:?} vs phase {:?}",
                mag.mags.dim(),
                phase.dim()
            )));
        }
        let mut bins = phase.clone();
        bins.zip_mut_with(&mag.mags, |p, &m| *p *= m);
        Ok(Self {
            bins,
            config: mag.config,
            sample_rate: mag.sample_rate,
        })
    }
}

impl MagnitudeSpectrogram {
    pub fn new(mags: Array2<f64>, config: StftConfig, sample_rate: u32) -> Result<Self> {
        if mags.nrows() != config.num_bins() {
            return Err(Error::Shape(format!(
                "expected {} bins for fft size {}, got {}",
                config.num_bins(),
                config.fft_size,
                mags.nrows()
            )));
        }
        if mags.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Numeric(
                "magnitudes must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            mags,
            config,
            sample_rate,
        })
    }

    pub fn num_bins(&self) -> usize {
        self.mags.nrows()
    }

    pub fn num_frames(&self) -> usize {
        self.mags.ncols()
    }
}

fn planner_fft(size: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(size)
    } else {
        planner.plan_fft_forward(size)
    }
}

pub fn stft(wav: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let len = wav.len();
    if len < cfg.frame_len {
        return Err(Error::TooShort(format!(
            "{len} samples is shorter than one {}-sample frame",
            cfg.frame_len
        )));
    }
    let window = make_window(cfg.window, cfg.frame_len)?;
    let frames = cfg.num_frames(len);
    let bins = cfg.num_bins();
    let fft = planner_fft(cfg.fft_size, false);
    let mut out = Array2::<Complex64>::zeros((bins, frames));
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
    let x = wav.samples();
    for t in 0..frames {
        let start = t * cfg.hop;
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (i, (s, w)) in x[start..start + cfg.frame_len].iter().zip(&window).enumerate() {
            buf[i] = Complex64::new(s * w, 0.0);
        }
        fft.process(&mut buf);
        for (f, c) in buf[..bins].iter().enumerate() {
            out[[f, t]] = *c;
        }
    }
    Ok(Spectrogram {
        bins: out,
        config: *cfg,
        sample_rate: wav.sample_rate(),
    })
}

pub fn istft(spec: &Spectrogram) -> Result<Waveform> {
    let cfg = spec.config;
    cfg.check_cola()?;
    let frames = spec.num_frames();
    if frames == 0 {
        return Err(Error::TooShort("spectrogram has no frames".into()));
    }
    if spec.num_bins() != cfg.num_bins() {
        return Err(Error::Shape(format!(
            "expected {} bins, got {}",
            cfg.num_bins(),
            spec.num_bins()
        )));
    }
    let window = make_window(cfg.window, cfg.frame_len)?;
    let n = cfg.fft_size;
    let ifft = planner_fft(n, true);
    let out_len = cfg.output_len(frames);
    let mut out = vec![0.0; out_len];
    let mut norm = vec![0.0; out_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let scale = 1.0 / n as f64;
    for (t, column) in spec.bins.axis_iter(Axis(1)).enumerate() {
        // Hermitian extension of the half spectrum
        for (f, c) in column.iter().enumerate() {
            buf[f] = *c;
        }
        for f in column.len()..n {
            buf[f] = buf[n - f].conj();
        }
        ifft.process(&mut buf);
        let start = t * cfg.hop;
        for (i, w) in window.iter().enumerate() {
            out[start + i] += buf[i].re * scale * w;
            norm[start + i] += w * w;
        }
    }
    // Near the ends the summed window power falls towards zero; dividing by
    // it there would amplify any modification of the spectrum without bound.
    let floor = 1e-3 * window.iter().map(|w| w * w).sum::<f64>() / cfg.hop as f64;
    for (o, z) in out.iter_mut().zip(&norm) {
        *o /= z.max(floor);
    }
    Waveform::new(out, spec.sample_rate)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_wave(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.random_range(-1.0..1.0)).collect(), 16000).unwrap()
    }

    /// Direct O(N^2) DFT of one zero-padded windowed frame.
    fn dft_oracle(frame: &[f64], window: &[f64], n: usize) -> Vec<Complex64> {
        (0..n / 2 + 1)
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (i, (x, w)) in frame.iter().zip(window).enumerate() {
                    let ang = -2.0 * PI * (k * i) as f64 / n as f64;
                    acc += Complex64::new(ang.cos(), ang.sin()) * (x * w);
                }
                acc
            })
            .collect()
    }

    #[test]
    fn zero_signal() {
        let wav = Waveform::zeros(2000, 16000).unwrap();
        let spec = stft(&wav, &StftConfig::SPEECH_16K).unwrap();
        assert!(spec.bins.iter().all(|c| c.norm() == 0.0));
        let back = istft(&spec).unwrap();
        assert!(back.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn frame_count() {
        let wav = random_wave(400, 1);
        let spec = stft(&wav, &StftConfig::SPEECH_16K).unwrap();
        assert_eq!(spec.num_frames(), 1);
        assert_eq!(spec.num_bins(), 257);
        let wav = random_wave(16000, 1);
        assert_eq!(stft(&wav, &StftConfig::SPEECH_16K).unwrap().num_frames(), 98);
    }

    #[test]
    fn too_short() {
        let wav = random_wave(399, 1);
        assert!(matches!(
            stft(&wav, &StftConfig::SPEECH_16K),
            Err(Error::TooShort(_))
        ));
    }

    #[test]
    fn matches_brute_force_dft() {
        let cfg = StftConfig::new(48, 16, 64, WindowKind::Hann).unwrap();
        let wav = random_wave(200, 7);
        let spec = stft(&wav, &cfg).unwrap();
        let w = make_window(cfg.window, cfg.frame_len).unwrap();
        for t in 0..spec.num_frames() {
            let frame = &wav.samples()[t * cfg.hop..t * cfg.hop + cfg.frame_len];
            let oracle = dft_oracle(frame, &w, cfg.fft_size);
            for (f, o) in oracle.iter().enumerate() {
                assert!((spec.bins[[f, t]] - o).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn bin_centred_sinusoid_concentrates_energy() {
        let cfg = StftConfig::new(64, 32, 64, WindowKind::Rectangular).unwrap();
        let k = 5.0;
        let x: Vec<f64> = (0..64).map(|i| (2.0 * PI * k * i as f64 / 64.0).cos()).collect();
        let spec = stft(&Waveform::new(x, 16000).unwrap(), &cfg).unwrap();
        let peak = spec.bins[[5, 0]].norm();
        assert!((peak - 32.0).abs() < 1e-9);
        for f in (0..spec.num_bins()).filter(|&f| f != 5) {
            assert!(spec.bins[[f, 0]].norm() < 1e-9 * peak);
        }
    }

    #[test]
    fn parseval_rectangular() {
        let cfg = StftConfig::new(32, 32, 32, WindowKind::Rectangular).unwrap();
        let wav = random_wave(32, 3);
        let spec = stft(&wav, &cfg).unwrap();
        let n = cfg.fft_size;
        // one-sided spectrum: DC and Nyquist counted once, the rest twice
        let mut power = 0.0;
        for f in 0..spec.num_bins() {
            let p = spec.bins[[f, 0]].norm_sqr();
            power += if f == 0 || f == n / 2 { p } else { 2.0 * p };
        }
        power /= n as f64;
        let direct = wav.energy();
        assert!((power - direct).abs() < 1e-6 * direct);
    }

    #[test]
    fn round_trip_interior() {
        for (cfg, seed) in [
            (StftConfig::SPEECH_16K, 11),
            (StftConfig::new(256, 128, 512, WindowKind::Hann).unwrap(), 12),
        ] {
            let wav = random_wave(cfg.frame_len * 6, seed);
            let spec = stft(&wav, &cfg).unwrap();
            let back = istft(&spec).unwrap();
            assert_eq!(back.len(), cfg.output_len(spec.num_frames()));
            let lo = cfg.frame_len;
            let hi = back.len() - cfg.frame_len;
            let err: f64 = (lo..hi)
                .map(|i| (back.samples()[i] - wav.samples()[i]).powi(2))
                .sum();
            let energy: f64 = (lo..hi).map(|i| wav.samples()[i].powi(2)).sum();
            assert!((err / energy).sqrt() < 1e-6);
        }
    }

    #[test]
    fn cola_violation_rejected() {
        let cfg = StftConfig::new(64, 64, 64, WindowKind::Hann).unwrap();
        assert!(cfg.check_cola().is_err());
        let wav = random_wave(256, 2);
        let spec = stft(&wav, &cfg).unwrap();
        assert!(istft(&spec).is_err());
        assert!(StftConfig::new(64, 64, 64, WindowKind::Rectangular)
            .unwrap()
            .check_cola()
            .is_ok());
        assert!(StftConfig::new(64, 65, 128, WindowKind::Hann).is_err());
    }

    #[test]
    fn linearity() {
        let cfg = StftConfig::SPEECH_16K;
        let x = random_wave(2000, 4);
        let y = random_wave(2000, 5);
        let (a, b) = (0.7, -1.3);
        let mix: Vec<f64> = x
            .samples()
            .iter()
            .zip(y.samples())
            .map(|(p, q)| a * p + b * q)
            .collect();
        let sx = stft(&x, &cfg).unwrap();
        let sy = stft(&y, &cfg).unwrap();
        let sm = stft(&Waveform::new(mix, 16000).unwrap(), &cfg).unwrap();
        for ((m, p), q) in sm.bins.iter().zip(sx.bins.iter()).zip(sy.bins.iter()) {
            assert!((m - (p * a + q * b)).norm() < 1e-9);
        }
    }
}
