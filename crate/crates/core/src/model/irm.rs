//! The ideal ratio mask, an oracle upper reference.

use ndarray::Array2;

use crate::error::{Error, Result};

pub const IRM_EPS: f64 = 1e-12;

/// `sqrt(s^2 / (s^2 + n^2 + eps))` elementwise.
pub fn ideal_ratio_mask(clean_mag: &Array2<f64>, interferer_mag: &Array2<f64>) -> Result<Array2<f64>> {
    if clean_mag.dim() != interferer_mag.dim() {
        return Err(Error::Shape(format!(
            "clean {:?} vs interferer {:?}",
            clean_mag.dim(),
            interferer_mag.dim()
        )));
    }
    let mut mask = clean_mag.clone();
    mask.zip_mut_with(interferer_mag, |s, &n| {
        let s2 = *s * *s;
        *s = (s2 / (s2 + n * n + IRM_EPS)).sqrt();
    });
    Ok(mask)
}
