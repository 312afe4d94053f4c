//! Rational-ratio resampling with a Kaiser-windowed sinc polyphase filter.

use std::f64::consts::PI;

use super::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResamplerDesign {
    pub kaiser_beta: f64,
    pub taps_per_phase: usize,
}

impl Default for ResamplerDesign {
    fn default() -> Self {
        Self {
            kaiser_beta: 8.0,
            taps_per_phase: 64,
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Filter bank indexed by output phase; each phase holds `taps_per_phase`
/// weights normalised to unit DC gain.
struct PolyphaseBank {
    up: usize,
    down: usize,
    first_tap: isize,
    phases: Vec<Vec<f64>>,
}

impl PolyphaseBank {
    fn new(up: usize, down: usize, design: &ResamplerDesign) -> Self {
        let taps = design.taps_per_phase.max(2);
        let half = taps as f64 / 2.0;
        // cutoff at the lower of the two Nyquist frequencies, in cycles per input sample
        let cutoff = 0.5 * (up as f64 / down as f64).min(1.0);
        let i0_beta = bessel_i0(design.kaiser_beta);
        let first_tap = -(taps as isize / 2) + 1;
        let phases = (0..up)
            .map(|phase| {
                let frac = phase as f64 / up as f64;
                let mut h: Vec<f64> = (0..taps)
                    .map(|j| {
                        let d = (first_tap + j as isize) as f64 - frac;
                        let r = d / half;
                        let win = if r.abs() <= 1.0 {
                            bessel_i0(design.kaiser_beta * (1.0 - r * r).sqrt()) / i0_beta
                        } else {
                            0.0
                        };
                        2.0 * cutoff * sinc(2.0 * cutoff * d) * win
                    })
                    .collect();
                let sum: f64 = h.iter().sum();
                h.iter_mut().for_each(|v| *v /= sum);
                h
            })
            .collect();
        Self {
            up,
            down,
            first_tap,
            phases,
        }
    }
}

pub fn resample(wav: &Waveform, target_rate: u32) -> Result<Waveform> {
    resample_with(wav, target_rate, &ResamplerDesign::default())
}

/// Output sample `n` sits at input position `n * source / target`; input
/// samples beyond either end are replaced by the nearest edge sample.
pub fn resample_with(wav: &Waveform, target_rate: u32, design: &ResamplerDesign) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::InvalidArgument("target sample rate must be positive".into()));
    }
    let source = wav.sample_rate();
    if source == target_rate || wav.is_empty() {
        return Waveform::new(wav.samples().to_vec(), target_rate);
    }
    let g = gcd(source as u64, target_rate as u64);
    let up = (target_rate as u64 / g) as usize;
    let down = (source as u64 / g) as usize;
    let bank = PolyphaseBank::new(up, down, design);

    let x = wav.samples();
    let last = x.len() as isize - 1;
    let out_len = ((x.len() as f64) * target_rate as f64 / source as f64).round() as usize;
    let out = (0..out_len)
        .map(|n| {
            let pos = n * bank.down;
            let base = (pos / bank.up) as isize;
            let taps = &bank.phases[pos % bank.up];
            taps.iter()
                .enumerate()
                .map(|(j, h)| {
                    let idx = (base + bank.first_tap + j as isize).clamp(0, last) as usize;
                    h * x[idx]
                })
                .sum()
        })
        .collect();
    Waveform::new(out, target_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Least-squares amplitude of a sinusoid of known frequency.
    fn fit_amplitude(x: &[f64], freq: f64, rate: f64) -> f64 {
        let (mut cc, mut ss, mut cs, mut xc, mut xs) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (n, v) in x.iter().enumerate() {
            let ph = 2.0 * PI * freq * n as f64 / rate;
            let (s, c) = ph.sin_cos();
            cc += c * c;
            ss += s * s;
            cs += c * s;
            xc += v * c;
            xs += v * s;
        }
        let det = cc * ss - cs * cs;
        let a = (xc * ss - xs * cs) / det;
        let b = (xs * cc - xc * cs) / det;
        (a * a + b * b).sqrt()
    }

    fn tone(freq: f64, rate: u32, len: usize, amp: f64) -> Waveform {
        Waveform::new(
            (0..len)
                .map(|n| amp * (2.0 * PI * freq * n as f64 / rate as f64).sin())
                .collect(),
            rate,
        )
        .unwrap()
    }

    #[test]
    fn identity_rate() {
        let w = tone(440.0, 16000, 1000, 0.3);
        assert_eq!(resample(&w, 16000).unwrap(), w);
    }

    #[test]
    fn output_length() {
        let w = tone(440.0, 16000, 16001, 0.3);
        assert_eq!(resample(&w, 10000).unwrap().len(), 10001);
        let w = tone(440.0, 16000, 333, 0.3);
        assert_eq!(resample(&w, 10000).unwrap().len(), 208);
    }

    #[test]
    fn sinusoid_survives_downsampling() {
        let w = tone(1000.0, 16000, 16000, 0.5);
        let r = resample(&w, 10000).unwrap();
        let steady = &r.samples()[200..r.len() - 200];
        let amp = fit_amplitude(steady, 1000.0, 10000.0);
        assert!((amp - 0.5).abs() < 0.005, "amplitude {amp}");
        // residual after removing the fitted tone is tiny, so the frequency is right
        let resid: f64 = steady
            .iter()
            .enumerate()
            .map(|(n, v)| {
                let e = v - 0.5 * (2.0 * PI * 1000.0 * (n + 200) as f64 / 10000.0).sin();
                e * e
            })
            .sum::<f64>()
            / steady.len() as f64;
        assert!(resid.sqrt() < 0.005);
    }

    #[test]
    fn passband_flat_below_four_tenths() {
        for freq in [200.0, 1500.0, 3000.0, 3990.0] {
            let w = tone(freq, 16000, 16000, 0.5);
            let r = resample(&w, 10000).unwrap();
            let amp = fit_amplitude(&r.samples()[300..r.len() - 300], freq, 10000.0);
            let db = 20.0 * (amp / 0.5).log10();
            assert!(db.abs() < 0.1, "{freq} Hz: {db} dB");
        }
    }

    #[test]
    fn upsampling_too() {
        let w = tone(1000.0, 10000, 10000, 0.5);
        let r = resample(&w, 16000).unwrap();
        assert_eq!(r.len(), 16000);
        let amp = fit_amplitude(&r.samples()[300..r.len() - 300], 1000.0, 16000.0);
        assert!((amp - 0.5).abs() < 0.005);
    }

    #[test]
    fn dc_preserved() {
        let w = Waveform::new(vec![0.37; 5000], 16000).unwrap();
        let r = resample(&w, 10000).unwrap();
        assert!(r.samples().iter().all(|v| (v - 0.37).abs() < 1e-6));
    }

    #[test]
    fn rejects_zero_rate() {
        let w = tone(1000.0, 16000, 100, 0.5);
        assert!(resample(&w, 0).is_err());
    }
}
