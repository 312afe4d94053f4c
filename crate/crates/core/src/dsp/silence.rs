use super::window::{make_window, WindowKind};
use super::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SilenceParams {
    pub dyn_range_db: f64,
    pub frame_len: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for SilenceParams {
    fn default() -> Self {
        Self {
            dyn_range_db: 40.0,
            frame_len: 256,
            hop: 128,
            window: WindowKind::Hann,
        }
    }
}

/// Drops the frames of `x` whose windowed energy lies more than
/// `dyn_range_db` below the loudest frame of `x`, removes the same frames
/// from `y`, and overlap-adds what is left. Uses a periodic Hann window.
pub fn remove_silent_frames(
    x: &Waveform,
    y: &Waveform,
    dyn_range_db: f64,
    frame_len: usize,
    hop: usize,
) -> Result<(Waveform, Waveform)> {
    remove_silent_frames_with(
        x,
        y,
        &SilenceParams {
            dyn_range_db,
            frame_len,
            hop,
            window: WindowKind::Hann,
        },
    )
}

/// Frame mask used by [`remove_silent_frames_with`]: `true` for frames kept.
pub fn active_frames(x: &[f64], params: &SilenceParams) -> Result<Vec<bool>> {
    validate(params)?;
    if x.len() < params.frame_len {
        return Err(Error::TooShort(format!(
            "{} samples is shorter than one {}-sample frame",
            x.len(),
            params.frame_len
        )));
    }
    let w = make_window(params.window, params.frame_len)?;
    let frames = (x.len() - params.frame_len) / params.hop + 1;
    let energies: Vec<f64> = (0..frames)
        .map(|t| {
            let s = &x[t * params.hop..t * params.hop + params.frame_len];
            let e: f64 = s.iter().zip(&w).map(|(v, w)| (v * w) * (v * w)).sum();
            e.sqrt()
        })
        .collect();
    let max = energies.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::SilentReference(
            "every frame of the reference is digital silence".into(),
        ));
    }
    let max_db = 20.0 * max.log10();
    Ok(energies
        .iter()
        .map(|&e| e > 0.0 && 20.0 * e.log10() > max_db - params.dyn_range_db)
        .collect())
}

pub fn remove_silent_frames_with(
    x: &Waveform,
    y: &Waveform,
    params: &SilenceParams,
) -> Result<(Waveform, Waveform)> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "signal lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let keep = active_frames(x.samples(), params)?;
    let w = make_window(params.window, params.frame_len)?;
    let kept: Vec<usize> = keep
        .iter()
        .enumerate()
        .filter_map(|(t, &k)| k.then_some(t))
        .collect();
    let out_len = (kept.len() - 1) * params.hop + params.frame_len;
    let ola = |src: &[f64]| {
        let mut out = vec![0.0; out_len];
        for (slot, &t) in kept.iter().enumerate() {
            let s = &src[t * params.hop..t * params.hop + params.frame_len];
            let dst = &mut out[slot * params.hop..slot * params.hop + params.frame_len];
            for ((d, v), w) in dst.iter_mut().zip(s).zip(&w) {
                *d += v * w;
            }
        }
        out
    };
    Ok((
        Waveform::new(ola(x.samples()), x.sample_rate())?,
        Waveform::new(ola(y.samples()), y.sample_rate())?,
    ))
}

fn validate(params: &SilenceParams) -> Result<()> {
    if !(params.dyn_range_db > 0.0) {
        return Err(Error::InvalidArgument("dynamic range must be positive".into()));
    }
    if params.hop == 0 || params.hop > params.frame_len {
        return Err(Error::InvalidArgument(format!(
            "invalid framing: frame {} hop {}",
            params.frame_len, params.hop
        )));
    }
    Ok(())
}
