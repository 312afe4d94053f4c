//! Speech-like test utterances.
//!
//! A harmonic source with a drifting fundamental is shaped by vowel formant
//! resonances and gated into syllables separated by short pauses. Optional
//! fricative bursts add broadband energy at syllable onsets.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::seed::rng_for;
use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// Reference vowel formants (F1, F2, F3) in Hz.
const VOWELS: [[f64; 3]; 5] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
];
const FORMANT_GAIN: [f64; 3] = [1.0, 0.55, 0.3];
const FORMANT_BANDWIDTH: [f64; 3] = [90.0, 110.0, 160.0];
const TARGET_RMS: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthVoiceSpec {
    pub speaker_seed: u64,
    pub utterance_seed: u64,
    /// Lowest and highest fundamental in Hz.
    pub f0_range: (f64, f64),
    /// One (F1, F2, F3) triple per vowel the speaker uses.
    pub formants: Vec<[f64; 3]>,
    pub syllable_rate: f64,
    pub duration_secs: f64,
    pub sample_rate: u32,
    pub fricatives: bool,
}

impl SynthVoiceSpec {
    /// Voice parameters drawn from `speaker_seed`; the utterance content
    /// varies with `utterance_seed`.
    pub fn for_speaker(speaker_seed: u64, utterance_seed: u64, duration_secs: f64, sample_rate: u32) -> Self {
        let mut rng = rng_for(&[0x5EED, speaker_seed]);
        let base: f64 = rng.random_range(95.0..220.0);
        let scale: f64 = rng.random_range(0.9..1.15);
        Self {
            speaker_seed,
            utterance_seed,
            f0_range: ((base * 0.85).max(80.0), (base * 1.2).min(300.0)),
            formants: VOWELS
                .iter()
                .map(|v| [v[0] * scale, v[1] * scale, v[2] * scale])
                .collect(),
            syllable_rate: rng.random_range(3.5..5.5),
            duration_secs,
            sample_rate,
            fricatives: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.f0_range;
        if !(80.0..=300.0).contains(&lo) || !(80.0..=300.0).contains(&hi) || lo > hi {
            return Err(Error::InvalidArgument(format!(
                "f0 range ({lo}, {hi}) must lie within [80, 300] Hz"
            )));
        }
        if !(self.duration_secs > 0.0) || !self.duration_secs.is_finite() {
            return Err(Error::InvalidArgument("duration must be positive".into()));
        }
        if !(self.syllable_rate > 0.0) {
            return Err(Error::InvalidArgument("syllable rate must be positive".into()));
        }
        if self.sample_rate < 8000 {
            return Err(Error::InvalidArgument("sample rate must be at least 8 kHz".into()));
        }
        let nyquist = f64::from(self.sample_rate) / 2.0;
        if self.formants.is_empty()
            || self
                .formants
                .iter()
                .flatten()
                .any(|&f| !(f > 0.0 && f < nyquist))
        {
            return Err(Error::InvalidArgument(
                "formants must be non-empty and below Nyquist".into(),
            ));
        }
        Ok(())
    }
}

fn formant_gain(freq: f64, formants: &[f64; 3]) -> f64 {
    let resonance: f64 = (0..3)
        .map(|j| {
            let d = (freq - formants[j]) / (FORMANT_BANDWIDTH[j] / 2.0);
            FORMANT_GAIN[j] / (1.0 + d * d)
        })
        .sum();
    (resonance + 0.01) / (1.0 + freq / 1500.0)
}

struct Syllable {
    start: usize,
    voiced: usize,
    vowel: usize,
    f0_offset: f64,
    fricative: bool,
}

pub fn synth_utterance(spec: &SynthVoiceSpec) -> Result<Waveform> {
    spec.validate()?;
    let fs = f64::from(spec.sample_rate);
    let len = (spec.duration_secs * fs).round() as usize;
    if len == 0 {
        return Err(Error::InvalidArgument("duration rounds to zero samples".into()));
    }
    let mut rng = rng_for(&[spec.speaker_seed, spec.utterance_seed]);

    let mut syllables = Vec::new();
    let mut pos = (rng.random_range(0.03..0.08) * fs) as usize;
    while pos < len {
        let dur = (fs / spec.syllable_rate * rng.random_range(0.8..1.25)) as usize;
        let voiced = (dur as f64 * rng.random_range(0.65..0.8)) as usize;
        syllables.push(Syllable {
            start: pos,
            voiced: voiced.max(1),
            vowel: rng.random_range(0..spec.formants.len()),
            f0_offset: rng.random_range(-0.08..0.08),
            fricative: spec.fricatives && rng.random_bool(0.3),
        });
        pos += dur.max(2);
    }

    let (lo, hi) = spec.f0_range;
    let drift_rate = rng.random_range(0.4..1.0);
    let drift_phase = rng.random_range(0.0..2.0 * PI);
    let mut out = vec![0.0; len];
    let mut theta = 0.0;
    let max_freq = 0.45 * fs;
    for syl in &syllables {
        let formants = &spec.formants[syl.vowel];
        let end = (syl.start + syl.voiced).min(len);
        for (n, slot) in out.iter_mut().enumerate().take(end).skip(syl.start) {
            let t = n as f64 / fs;
            let u = (n - syl.start) as f64 / syl.voiced as f64;
            let drift = 0.5 + 0.4 * (2.0 * PI * drift_rate * t + drift_phase).sin();
            let f0 = ((lo + (hi - lo) * drift) * (1.0 + syl.f0_offset)).clamp(80.0, 300.0);
            theta += 2.0 * PI * f0 / fs;
            let env = (PI * u).sin().sqrt();
            let mut acc = 0.0;
            let mut k = 1.0;
            while k * f0 < max_freq {
                acc += formant_gain(k * f0, formants) * (k * theta).sin();
                k += 1.0;
            }
            *slot = env * acc;
        }
        if syl.fricative {
            let burst = (syl.voiced / 5).min(len.saturating_sub(syl.start));
            let mut prev: f64 = 0.0;
            for i in 0..burst {
                let white: f64 = StandardNormal.sample(&mut rng);
                let shaped = white - prev;
                prev = white;
                let u = i as f64 / burst as f64;
                out[syl.start + i] += 0.15 * (PI * u).sin() * shaped;
            }
        }
    }

    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    if rms > 0.0 {
        let gain = TARGET_RMS / rms;
        out.iter_mut().for_each(|v| *v *= gain);
    }
    Waveform::new(out, spec.sample_rate)
}

/// Stationary noise with a speech-like spectral tilt, for the optional
/// noise-interferer mode.
pub fn synth_noise(seed: u64, duration_secs: f64, sample_rate: u32) -> Result<Waveform> {
    let len = (duration_secs * f64::from(sample_rate)).round() as usize;
    if len == 0 {
        return Err(Error::InvalidArgument("duration rounds to zero samples".into()));
    }
    let mut rng = rng_for(&[0x4015E, seed]);
    let mut state = 0.0;
    let mut out: Vec<f64> = (0..len)
        .map(|_| {
            let w: f64 = StandardNormal.sample(&mut rng);
            state = 0.9 * state + w;
            state
        })
        .collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    out.iter_mut().for_each(|v| *v *= TARGET_RMS / rms);
    Waveform::new(out, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{active_frames, stft, SilenceParams, StftConfig};

    #[test]
    fn deterministic() {
        let spec = SynthVoiceSpec::for_speaker(7, 3, 1.0, 16_000);
        let a = synth_utterance(&spec).unwrap();
        let b = synth_utterance(&spec).unwrap();
        assert_eq!(a.samples(), b.samples());
        let other = synth_utterance(&SynthVoiceSpec { utterance_seed: 4, ..spec }).unwrap();
        assert_ne!(a.samples(), other.samples());
        assert_eq!(a.len(), 16_000);
    }

    #[test]
    fn spectral_peak_near_first_formant() {
        for (speaker, vowel) in [(1, [730.0, 1090.0, 2440.0]), (2, [530.0, 1840.0, 2480.0])] {
            let spec = SynthVoiceSpec {
                formants: vec![vowel],
                fricatives: false,
                ..SynthVoiceSpec::for_speaker(speaker, 0, 2.0, 16_000)
            };
            let wav = synth_utterance(&spec).unwrap();
            let spec_mag = stft(&wav, &StftConfig::SPEECH_16K).unwrap().magnitude();
            let power: Vec<f64> = spec_mag.mags.rows().into_iter().map(|r| r.iter().map(|v| v * v).sum()).collect();
            let bin_hz = 16_000.0 / 512.0;
            let lo = (150.0 / bin_hz) as usize;
            let peak = (lo..power.len()).max_by(|&a, &b| power[a].total_cmp(&power[b])).unwrap();
            let f = peak as f64 * bin_hz;
            assert!((f - vowel[0]).abs() <= 0.1 * vowel[0], "peak {f} Hz vs F1 {}", vowel[0]);
        }
    }

    #[test]
    fn passes_non_silence_criterion() {
        for speaker in 0..5 {
            let wav = synth_utterance(&SynthVoiceSpec::for_speaker(speaker, speaker + 10, 1.5, 16_000)).unwrap();
            let active = active_frames(wav.samples(), &SilenceParams::default()).unwrap();
            let frac = active.iter().filter(|a| **a).count() as f64 / active.len() as f64;
            assert!(frac >= 0.3, "speaker {speaker}: {frac}");
            // Pauses exist: not every frame is at full level.
            let peak = wav.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(peak < 1.0);
        }
    }

    #[test]
    fn invalid_specs() {
        let good = SynthVoiceSpec::for_speaker(1, 1, 1.0, 16_000);
        for bad in [
            SynthVoiceSpec { f0_range: (50.0, 120.0), ..good.clone() },
            SynthVoiceSpec { f0_range: (200.0, 350.0), ..good.clone() },
            SynthVoiceSpec { duration_secs: 0.0, ..good.clone() },
            SynthVoiceSpec { formants: vec![], ..good.clone() },
            SynthVoiceSpec { formants: vec![[500.0, 1500.0, 9000.0]], ..good.clone() },
        ] {
            assert!(synth_utterance(&bad).is_err());
        }
    }

    #[test]
    fn speaker_voices_differ() {
        let a = SynthVoiceSpec::for_speaker(1, 0, 1.0, 16_000);
        let b = SynthVoiceSpec::for_speaker(2, 0, 1.0, 16_000);
        assert_ne!(a.f0_range, b.f0_range);
        assert!(a.validate().is_ok() && b.validate().is_ok());
    }

    #[test]
    fn noise_has_target_level() {
        let n = synth_noise(3, 0.5, 16_000).unwrap();
        let rms = (n.energy() / n.len() as f64).sqrt();
        assert!((rms - TARGET_RMS).abs() < 1e-12);
    }
}
