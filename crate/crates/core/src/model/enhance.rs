//! Waveform-level enhancement: mask the noisy magnitude, keep the noisy phase.

use ndarray::Array2;

use super::network::MaskEstimator;
use super::visual::upsample_visual;
use crate::data::{extract_features, VisualFeatureTrack};
use crate::dsp::{istft, MagnitudeSpectrogram, Spectrogram, Waveform};
use crate::error::{Error, Result};

/// Applies a real mask to a complex spectrogram and resynthesises.
pub fn apply_mask(spec: &Spectrogram, mask: &Array2<f64>) -> Result<Waveform> {
    if mask.dim() != spec.bins.dim() {
        return Err(Error::Shape(format!(
            "mask {:?} vs spectrogram {:?}",
            mask.dim(),
            spec.bins.dim()
        )));
    }
    let mut mag = spec.magnitude();
    mag.mags *= mask;
    istft(&Spectrogram::from_magnitude_phase(&mag, &spec.phase())?)
}

/// Mask and masked magnitude for a noisy spectrogram.
pub fn estimate(
    model: &MaskEstimator,
    spec: &Spectrogram,
    visual: &VisualFeatureTrack,
) -> Result<(Array2<f64>, MagnitudeSpectrogram)> {
    let noisy = spec.magnitude();
    let hop = spec.config.hop as f64 / f64::from(spec.sample_rate);
    let vis = upsample_visual(visual, noisy.num_frames(), hop)?;
    let mask = model.forward(&noisy.mags, &vis)?;
    let mut masked = noisy;
    masked.mags *= &mask;
    Ok((mask, masked))
}

/// Enhances a 16 kHz mixture.
pub fn enhance(model: &MaskEstimator, noisy: &Waveform, visual: &VisualFeatureTrack) -> Result<Waveform> {
    let spec = extract_features(noisy)?;
    let (mask, _) = estimate(model, &spec, visual)?;
    apply_mask(&spec, &mask)
}
