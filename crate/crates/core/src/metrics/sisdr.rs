use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// Value reported when the residual is numerically zero.
pub const SI_SDR_CAP_DB: f64 = 200.0;

/// Scale-invariant signal-to-distortion ratio in dB.
pub fn si_sdr(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::Shape(format!(
            "signal lengths differ: {} vs {}",
            reference.len(),
            estimate.len()
        )));
    }
    let r = reference.samples();
    let e = estimate.samples();
    let ref_energy: f64 = r.iter().map(|v| v * v).sum();
    if ref_energy == 0.0 {
        return Err(Error::SilentReference("SI-SDR reference is all zeros".into()));
    }
    let alpha = r.iter().zip(e).map(|(a, b)| a * b).sum::<f64>() / ref_energy;
    let target_energy = alpha * alpha * ref_energy;
    let residual: f64 = r
        .iter()
        .zip(e)
        .map(|(a, b)| {
            let d = b - alpha * a;
            d * d
        })
        .sum();
    if residual < 1e-20 * target_energy || (residual == 0.0 && target_energy == 0.0) {
        return Ok(SI_SDR_CAP_DB);
    }
    Ok(10.0 * (target_energy / residual).log10())
}
