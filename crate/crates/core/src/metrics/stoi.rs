//! Short-time objective intelligibility.
//!
//! The classical and extended measures follow the reference algorithm:
//! resample to 10 kHz, drop frames more than 40 dB below the loudest clean
//! frame, analyse 256-sample frames (hop 128, 512-point FFT) into 15
//! one-third octave bands from 150 Hz, and correlate 30-frame envelope
//! segments. The modified variants start from 16 kHz magnitude spectrograms
//! and skip the resampling and silence stages.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dsp::{
    band_envelopes_raw, remove_silent_frames_with, resample, segment_envelopes, stft, thirdoct,
    MagnitudeSpectrogram, SilenceParams, StftConfig, Waveform, WindowKind,
};
use crate::error::{Error, Result};

pub const CLASSICAL_SAMPLE_RATE: u32 = 10_000;
pub const CLASSICAL_FRAME_LEN: usize = 256;
pub const CLASSICAL_FFT_SIZE: usize = 512;

/// A centred row whose norm falls below this fraction of its raw norm is
/// treated as constant.
pub(crate) const DEGENERATE_REL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoiVariant {
    Classical,
    Extended,
    ModifiedClassical,
    ModifiedExtended,
}

impl StoiVariant {
    pub fn is_extended(self) -> bool {
        matches!(self, StoiVariant::Extended | StoiVariant::ModifiedExtended)
    }

    pub fn is_modified(self) -> bool {
        matches!(
            self,
            StoiVariant::ModifiedClassical | StoiVariant::ModifiedExtended
        )
    }
}

impl fmt::Display for StoiVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StoiVariant::Classical => "stoi",
            StoiVariant::Extended => "estoi",
            StoiVariant::ModifiedClassical => "modified_stoi",
            StoiVariant::ModifiedExtended => "modified_estoi",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoiConfig {
    pub variant: StoiVariant,
    /// Lower signal-to-distortion bound for clipping; ignored by extended variants.
    pub clip_beta_db: f64,
    /// Envelope frames per segment.
    pub segment_len: usize,
    pub num_bands: usize,
    pub min_center_freq: f64,
}

impl StoiConfig {
    pub fn new(variant: StoiVariant) -> Self {
        Self {
            variant,
            clip_beta_db: -15.0,
            segment_len: 30,
            num_bands: 15,
            min_center_freq: 150.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.segment_len < 2 {
            return Err(Error::InvalidArgument("segment length must be >= 2".into()));
        }
        if !self.variant.is_extended() && !(self.clip_beta_db < 0.0) {
            return Err(Error::InvalidArgument(
                "clipping bound must be negative for classical variants".into(),
            ));
        }
        Ok(())
    }

    /// Multiplier applied to the clean envelope to obtain the clipping ceiling.
    pub fn clip_factor(&self) -> f64 {
        1.0 + 10f64.powf(-self.clip_beta_db / 20.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub value: f64,
    pub variant: StoiVariant,
    /// Band/segment correlations that were undefined (constant rows) and
    /// counted as zero.
    pub degenerate: usize,
}

fn check_pair(clean: &Waveform, degraded: &Waveform) -> Result<()> {
    if clean.sample_rate() != degraded.sample_rate() {
        return Err(Error::InvalidArgument(format!(
            "sample rates differ: {} vs {}",
            clean.sample_rate(),
            degraded.sample_rate()
        )));
    }
    if clean.len() != degraded.len() {
        return Err(Error::Shape(format!(
            "signal lengths differ: {} vs {}",
            clean.len(),
            degraded.len()
        )));
    }
    Ok(())
}

/// Classical (`extended = false`) or extended STOI of two time signals.
pub fn stoi(clean: &Waveform, degraded: &Waveform, extended: bool) -> Result<MetricScore> {
    let variant = if extended {
        StoiVariant::Extended
    } else {
        StoiVariant::Classical
    };
    stoi_with(clean, degraded, &StoiConfig::new(variant))
}

pub fn stoi_with(clean: &Waveform, degraded: &Waveform, cfg: &StoiConfig) -> Result<MetricScore> {
    cfg.validate()?;
    if cfg.variant.is_modified() {
        return Err(Error::InvalidArgument(
            "modified variants operate on spectrograms; use modified_stoi".into(),
        ));
    }
    check_pair(clean, degraded)?;
    let x = resample(clean, CLASSICAL_SAMPLE_RATE)?;
    let y = resample(degraded, CLASSICAL_SAMPLE_RATE)?;

    // The reference framing never uses a frame that ends exactly on the last
    // sample; dropping that sample reproduces its frame counts.
    let drop_last = |w: &Waveform| w.truncated(w.len().saturating_sub(1));
    let params = SilenceParams {
        dyn_range_db: 40.0,
        frame_len: CLASSICAL_FRAME_LEN,
        hop: CLASSICAL_FRAME_LEN / 2,
        window: WindowKind::Hanning,
    };
    let (x, y) = remove_silent_frames_with(&drop_last(&x), &drop_last(&y), &params)?;

    let stft_cfg = StftConfig::new(
        CLASSICAL_FRAME_LEN,
        CLASSICAL_FRAME_LEN / 2,
        CLASSICAL_FFT_SIZE,
        WindowKind::Hanning,
    )?;
    let (x, y) = (drop_last(&x), drop_last(&y));
    if x.len() < stft_cfg.frame_len {
        return Err(Error::TooShort(
            "no complete frame survives silent-frame removal".into(),
        ));
    }
    let xm = stft(&x, &stft_cfg)?.magnitude();
    let ym = stft(&y, &stft_cfg)?.magnitude();
    let obm = thirdoct(
        CLASSICAL_SAMPLE_RATE,
        CLASSICAL_FFT_SIZE,
        cfg.num_bands,
        cfg.min_center_freq,
    )?;
    let xe = band_envelopes_raw(xm.mags.view(), &obm)?;
    let ye = band_envelopes_raw(ym.mags.view(), &obm)?;
    score_envelopes(&xe, &ye, cfg)
}

/// Modified STOI of two magnitude spectrograms sharing framing and rate.
pub fn modified_stoi(
    clean_mag: &MagnitudeSpectrogram,
    est_mag: &MagnitudeSpectrogram,
    extended: bool,
) -> Result<MetricScore> {
    let variant = if extended {
        StoiVariant::ModifiedExtended
    } else {
        StoiVariant::ModifiedClassical
    };
    modified_stoi_with(clean_mag, est_mag, &StoiConfig::new(variant))
}

pub fn modified_stoi_with(
    clean_mag: &MagnitudeSpectrogram,
    est_mag: &MagnitudeSpectrogram,
    cfg: &StoiConfig,
) -> Result<MetricScore> {
    cfg.validate()?;
    if clean_mag.mags.dim() != est_mag.mags.dim() {
        return Err(Error::Shape(format!(
            "spectrogram shapes differ: {:?} vs {:?}",
            clean_mag.mags.dim(),
            est_mag.mags.dim()
        )));
    }
    if clean_mag.sample_rate != est_mag.sample_rate || clean_mag.config != est_mag.config {
        return Err(Error::InvalidArgument(
            "spectrograms use different analysis settings".into(),
        ));
    }
    let obm = thirdoct(
        clean_mag.sample_rate,
        clean_mag.config.fft_size,
        cfg.num_bands,
        cfg.min_center_freq,
    )?;
    let xe = band_envelopes_raw(clean_mag.mags.view(), &obm)?;
    let ye = band_envelopes_raw(est_mag.mags.view(), &obm)?;
    score_envelopes(&xe, &ye, cfg)
}

/// Correlation stage shared by every variant: segments the two band envelope
/// matrices (I x M) and averages the per-segment intermediate measures.
pub fn score_envelopes(
    clean_env: &Array2<f64>,
    est_env: &Array2<f64>,
    cfg: &StoiConfig,
) -> Result<MetricScore> {
    cfg.validate()?;
    if clean_env.dim() != est_env.dim() {
        return Err(Error::Shape(format!(
            "envelope shapes differ: {:?} vs {:?}",
            clean_env.dim(),
            est_env.dim()
        )));
    }
    let xs = segment_envelopes(clean_env, cfg.segment_len)?;
    let ys = segment_envelopes(est_env, cfg.segment_len)?;
    let mut degenerate = 0;
    let mut total = 0.0;
    let segments = xs.len();
    for j in 0..segments {
        let (x, y) = (xs.segment(j), ys.segment(j));
        if cfg.variant.is_extended() {
            total += extended_segment(x, y, &mut degenerate);
        } else {
            for i in 0..x.nrows() {
                total += clipped_correlation(x.row(i), y.row(i), cfg.clip_factor(), &mut degenerate);
            }
        }
    }
    let count = if cfg.variant.is_extended() {
        segments
    } else {
        segments * clean_env.nrows()
    };
    Ok(MetricScore {
        value: total / count as f64,
        variant: cfg.variant,
        degenerate,
    })
}

fn norm(v: ArrayView1<'_, f64>) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn centered(v: &Array1<f64>) -> Array1<f64> {
    let mean = v.sum() / v.len() as f64;
    v.mapv(|a| a - mean)
}

fn clipped_correlation(
    x: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
    clip: f64,
    degenerate: &mut usize,
) -> f64 {
    let (nx, ny) = (norm(x), norm(y));
    if nx == 0.0 || ny == 0.0 {
        *degenerate += 1;
        return 0.0;
    }
    let gain = nx / ny;
    let y_clipped: Array1<f64> = y
        .iter()
        .zip(x.iter())
        .map(|(&b, &a)| (b * gain).min(clip * a))
        .collect();
    let x = x.to_owned();
    let (xc, yc) = (centered(&x), centered(&y_clipped));
    let (nxc, nyc) = (norm(xc.view()), norm(yc.view()));
    if nxc <= DEGENERATE_REL * nx || nyc <= DEGENERATE_REL * norm(y_clipped.view()) {
        *degenerate += 1;
        return 0.0;
    }
    xc.dot(&yc) / (nxc * nyc)
}

/// Mean/variance normalisation of every row, then of every column; constant
/// rows or columns become zero.
fn row_col_normalize(seg: ArrayView2<'_, f64>, degenerate: &mut usize) -> Array2<f64> {
    let mut m = seg.to_owned();
    for mut row in m.rows_mut() {
        let raw = norm(row.view());
        let mean = row.sum() / row.len() as f64;
        row.mapv_inplace(|a| a - mean);
        let n = norm(row.view());
        if raw == 0.0 || n <= DEGENERATE_REL * raw {
            *degenerate += 1;
            row.fill(0.0);
        } else {
            row.mapv_inplace(|a| a / n);
        }
    }
    for mut col in m.columns_mut() {
        let raw = norm(col.view());
        let mean = col.sum() / col.len() as f64;
        col.mapv_inplace(|a| a - mean);
        let n = norm(col.view());
        if raw == 0.0 || n <= DEGENERATE_REL * raw {
            col.fill(0.0);
        } else {
            col.mapv_inplace(|a| a / n);
        }
    }
    m
}

fn extended_segment(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, degenerate: &mut usize) -> f64 {
    let xn = row_col_normalize(x, degenerate);
    let yn = row_col_normalize(y, degenerate);
    let n = x.ncols() as f64;
    (&xn * &yn).sum() / n
}
