//! Two-source mixing at a prescribed signal-to-noise ratio.

use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// Grid the scaled interferer is rounded to. Any target on a coarser grid
/// (16-bit audio is on 2^-15) is then recovered exactly as
/// `mixture - scaled_interferer`.
const INTERFERER_GRID: f64 = 1099511627776.0; // 2^40

/// How an interferer of the wrong length is brought to the target length.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthFit {
    /// Keep the centre of a longer interferer; loop a shorter one.
    #[default]
    Crop,
    /// Repeat from the start and truncate.
    Loop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub mixture: Waveform,
    pub scaled_interferer: Waveform,
}

pub fn fit_length(interferer: &Waveform, len: usize, fit: LengthFit) -> Result<Waveform> {
    let src = interferer.samples();
    if src.is_empty() {
        return Err(Error::InvalidArgument("interferer is empty".into()));
    }
    let samples = if fit == LengthFit::Crop && src.len() >= len {
        let start = (src.len() - len) / 2;
        src[start..start + len].to_vec()
    } else {
        src.iter().copied().cycle().take(len).collect()
    };
    Waveform::new(samples, interferer.sample_rate())
}

/// `10 log10(|target|^2 / |interferer|^2)`.
pub fn snr_db(target: &Waveform, interferer: &Waveform) -> f64 {
    10.0 * (target.energy() / interferer.energy()).log10()
}

/// Scales `interferer` so the energy ratio over the whole utterance equals
/// `snr_db`, and adds it to `target`.
pub fn mix_at_snr(target: &Waveform, interferer: &Waveform, snr_db: f64, fit: LengthFit) -> Result<Mixture> {
    if target.sample_rate() != interferer.sample_rate() {
        return Err(Error::SampleRateMismatch {
            expected: target.sample_rate(),
            found: interferer.sample_rate(),
        });
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidArgument("SNR must be finite".into()));
    }
    let fitted = fit_length(interferer, target.len(), fit)?;
    let (et, ei) = (target.energy(), fitted.energy());
    if ei == 0.0 {
        return Err(Error::SilentReference("interferer has no energy".into()));
    }
    if et == 0.0 {
        return Err(Error::SilentReference("target has no energy".into()));
    }
    let gain = (et / (ei * 10f64.powf(snr_db / 10.0))).sqrt();
    let scaled: Vec<f64> = fitted
        .samples()
        .iter()
        .map(|v| (v * gain * INTERFERER_GRID).round() / INTERFERER_GRID)
        .collect();
    let mixture = target.samples().iter().zip(&scaled).map(|(a, b)| a + b).collect();
    Ok(Mixture {
        mixture: Waveform::new(mixture, target.sample_rate())?,
        scaled_interferer: Waveform::new(scaled, target.sample_rate())?,
    })
}
