//! One-third octave band analysis and short-time envelope segmentation.

use std::ops::Range;

use ndarray::{s, Array2, Array3, ArrayView2};

use super::MagnitudeSpectrogram;
use crate::error::{Error, Result};

/// Band-membership matrix (I x F, entries 0 or 1).
#[derive(Debug, Clone, PartialEq)]
pub struct OctaveBandMatrix {
    pub membership: Array2<f64>,
    pub center_freqs: Vec<f64>,
    /// FFT bin range of each band.
    pub bin_ranges: Vec<Range<usize>>,
    pub requested_bands: usize,
    pub sample_rate: u32,
    pub fft_size: usize,
}

impl OctaveBandMatrix {
    pub fn num_bands(&self) -> usize {
        self.center_freqs.len()
    }

    pub fn num_bins(&self) -> usize {
        self.membership.ncols()
    }

    /// Bands that were requested but lay above Nyquist.
    pub fn dropped_bands(&self) -> usize {
        self.requested_bands - self.num_bands()
    }
}

/// Builds the band matrix. Band `k` is centred at `min_center_freq * 2^(k/3)`
/// with edges a sixth of an octave either side; each edge is snapped to the
/// nearest FFT bin and the band covers `[low_bin, high_bin)`. Bands whose upper
/// edge exceeds Nyquist are dropped and reported via
/// [`OctaveBandMatrix::dropped_bands`].
pub fn thirdoct(
    sample_rate: u32,
    fft_size: usize,
    num_bands: usize,
    min_center_freq: f64,
) -> Result<OctaveBandMatrix> {
    if !(min_center_freq > 0.0) || num_bands == 0 || fft_size < 2 || sample_rate == 0 {
        return Err(Error::InvalidArgument(format!(
            "invalid band layout: fs={sample_rate} fft={fft_size} bands={num_bands} min_cf={min_center_freq}"
        )));
    }
    let bins = fft_size / 2 + 1;
    let bin_hz = sample_rate as f64 / fft_size as f64;
    let nyquist = sample_rate as f64 / 2.0;
    let nearest_bin = |freq: f64| -> usize {
        // ties resolve to the lower bin
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for b in 0..bins {
            let d = (b as f64 * bin_hz - freq).powi(2);
            if d < best_d {
                best_d = d;
                best = b;
            }
        }
        best
    };

    let mut center_freqs = Vec::new();
    let mut bin_ranges = Vec::new();
    for k in 0..num_bands {
        let kf = k as f64;
        let high = min_center_freq * 2f64.powf((2.0 * kf + 1.0) / 6.0);
        if high > nyquist {
            break;
        }
        let low = min_center_freq * 2f64.powf((2.0 * kf - 1.0) / 6.0);
        let range = nearest_bin(low)..nearest_bin(high);
        if range.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no FFT bins fall in band {k} ({low:.1}-{high:.1} Hz) at {bin_hz:.2} Hz resolution"
            )));
        }
        center_freqs.push(min_center_freq * 2f64.powf(kf / 3.0));
        bin_ranges.push(range);
    }
    if bin_ranges.is_empty() {
        return Err(Error::InvalidArgument(
            "the first band already exceeds Nyquist".into(),
        ));
    }
    let mut membership = Array2::zeros((bin_ranges.len(), bins));
    for (i, r) in bin_ranges.iter().enumerate() {
        membership.slice_mut(s![i, r.clone()]).fill(1.0);
    }
    Ok(OctaveBandMatrix {
        membership,
        center_freqs,
        bin_ranges,
        requested_bands: num_bands,
        sample_rate,
        fft_size,
    })
}

/// `env[i, m] = sqrt(sum over bins f in band i of mags[f, m]^2)`.
pub fn band_envelopes(mag: &MagnitudeSpectrogram, obm: &OctaveBandMatrix) -> Result<Array2<f64>> {
    band_envelopes_raw(mag.mags.view(), obm)
}

pub(crate) fn band_envelopes_raw(
    mags: ArrayView2<'_, f64>,
    obm: &OctaveBandMatrix,
) -> Result<Array2<f64>> {
    if mags.nrows() != obm.num_bins() {
        return Err(Error::Shape(format!(
            "spectrogram has {} bins, band matrix expects {}",
            mags.nrows(),
            obm.num_bins()
        )));
    }
    let frames = mags.ncols();
    let mut env = Array2::zeros((obm.num_bands(), frames));
    for (i, r) in obm.bin_ranges.iter().enumerate() {
        for m in 0..frames {
            let e: f64 = mags.slice(s![r.clone(), m]).iter().map(|v| v * v).sum();
            env[[i, m]] = e.sqrt();
        }
    }
    Ok(env)
}

/// Overlapping windows of `N` consecutive envelope frames.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeSegments {
    /// Shape `(M - N + 1, I, N)`.
    pub data: Array3<f64>,
}

impl EnvelopeSegments {
    pub fn len(&self) -> usize {
        self.data.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn segment_len(&self) -> usize {
        self.data.dim().2
    }

    pub fn segment(&self, j: usize) -> ArrayView2<'_, f64> {
        self.data.slice(s![j, .., ..])
    }
}

pub fn segment_envelopes(env: &Array2<f64>, n: usize) -> Result<EnvelopeSegments> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("segment length must be >= 2, got {n}")));
    }
    let (bands, frames) = env.dim();
    if frames < n {
        return Err(Error::TooShort(format!(
            "{frames} envelope frames, need at least {n}"
        )));
    }
    let count = frames - n + 1;
    let mut data = Array3::zeros((count, bands, n));
    for j in 0..count {
        data.slice_mut(s![j, .., ..]).assign(&env.slice(s![.., j..j + n]));
    }
    Ok(EnvelopeSegments { data })
}
