//! Log-magnitude spectrogram export for visual inspection.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::dsp::{stft, StftConfig, Waveform};
use crate::error::{Error, Result};

pub const FLOOR_DB: f64 = -80.0;

/// `max(20 log10 |X|, FLOOR_DB)`, `F x T`.
pub fn log_spectrogram(wav: &Waveform, cfg: &StftConfig) -> Result<Array2<f64>> {
    Ok(stft(wav, cfg)?
        .magnitude()
        .mags
        .mapv(|m| if m > 0.0 { (20.0 * m.log10()).max(FLOOR_DB) } else { FLOOR_DB }))
}

/// 8-bit binary graymap, `T` wide and `F` tall with low frequencies at the
/// bottom. The range `[FLOOR_DB, max]` maps to `[0, 255]`.
pub fn to_pgm(db: &Array2<f64>) -> Vec<u8> {
    let (f, t) = db.dim();
    let top = db.iter().copied().fold(FLOOR_DB, f64::max);
    let span = top - FLOOR_DB;
    let mut out = format!("P5\n{t} {f}\n255\n").into_bytes();
    for k in (0..f).rev() {
        for j in 0..t {
            let v = if span > 0.0 { (db[[k, j]] - FLOOR_DB) / span * 255.0 } else { 0.0 };
            out.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

/// Whitespace-separated text matrix, one frequency row per line.
pub fn to_text(db: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in db.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Writes `<stem>.pgm` and `<stem>.txt` into `out_dir`.
pub fn export_spectrogram(wav: &Waveform, cfg: &StftConfig, out_dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
    let db = log_spectrogram(wav, cfg)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let pgm = out_dir.join(format!("{stem}.pgm"));
    let txt = out_dir.join(format!("{stem}.txt"));
    fs::write(&pgm, to_pgm(&db)).map_err(|e| Error::io(&pgm, e))?;
    fs::write(&txt, to_text(&db)).map_err(|e| Error::io(&txt, e))?;
    Ok((pgm, txt))
}
