//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use avse_core::Waveform;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
pub struct ReferencePair {
    pub index: usize,
    pub sample_rate: u32,
    pub snr_db: f64,
    pub stoi: f64,
    pub estoi: f64,
}

#[derive(Debug, Deserialize)]
struct ReferenceFile {
    pairs: Vec<ReferencePair>,
}

/// Scores written by `fixtures/gen_stoi_reference.py`.
pub fn reference_scores() -> Vec<ReferencePair> {
    let text = include_str!("../fixtures/stoi_reference.json");
    serde_json::from_str::<ReferenceFile>(text).expect("fixture parses").pairs
}

fn lcg_noise(seed: u64, n: usize) -> Vec<f64> {
    let mut state = seed;
    (0..n)
        .map(|_| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}

/// The clean and noisy signal of fixture pair `index`, built exactly as the
/// generator script builds them.
pub fn reference_pair(index: usize) -> (Waveform, Waveform) {
    let fs: u32 = 10_000;
    let n = (2.5 * fs as f64) as usize;
    let f0 = 110.0 + 7.0 * index as f64;
    let rate = 3.0 + 0.25 * index as f64;
    let clean: Vec<f64> = (0..n)
        .map(|k| {
            let t = k as f64 / fs as f64;
            let mut env = (2.0 * PI * rate * t).sin().max(0.0).powi(2);
            if (1.2..1.5).contains(&t) {
                env = 0.0;
            }
            let mut s = 0.0;
            for h in 1..9 {
                let h = h as f64;
                s += (2.0 * PI * f0 * h * t + 0.3 * h).sin() / h;
            }
            0.1 * env * s
        })
        .collect();
    let noise = lcg_noise(1000 + index as u64, n);
    let snr_db = -5.0 + ((index * 7) % 21) as f64;
    let ec: f64 = clean.iter().map(|v| v * v).sum();
    let en: f64 = noise.iter().map(|v| v * v).sum();
    let gain = (ec / (en * 10f64.powf(snr_db / 10.0))).sqrt();
    let noisy = clean.iter().zip(&noise).map(|(c, v)| c + gain * v).collect();
    (
        Waveform::new(clean, fs).unwrap(),
        Waveform::new(noisy, fs).unwrap(),
    )
}
