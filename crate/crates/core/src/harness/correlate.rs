//! How closely the spectrogram-domain STOI variants track the originals.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{load_utterances, Selection, Utterance};
use crate::data::Manifest;
use crate::dsp::{stft, StftConfig, Waveform};
use crate::error::Result;
use crate::metrics::{modified_stoi, pearson, stoi};
use crate::model::{apply_mask, ideal_ratio_mask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationPoint {
    pub id: String,
    /// `noisy` or `irm`.
    pub signal: String,
    pub stoi: f64,
    pub modified_stoi: f64,
    pub estoi: f64,
    pub modified_estoi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub points: Vec<CorrelationPoint>,
    /// Pearson r between classical and modified STOI.
    pub r_classical: f64,
    /// Pearson r between extended and modified extended STOI.
    pub r_extended: f64,
}

/// All four scores for one degraded signal.
pub fn score_pair(id: &str, signal: &str, clean: &Waveform, degraded: &Waveform, cfg: &StftConfig) -> Result<CorrelationPoint> {
    let n = clean.len().min(degraded.len());
    let (c, d) = (clean.truncated(n), degraded.truncated(n));
    let cm = stft(&c, cfg)?.magnitude();
    let dm = stft(&d, cfg)?.magnitude();
    Ok(CorrelationPoint {
        id: id.to_string(),
        signal: signal.to_string(),
        stoi: stoi(&c, &d, false)?.value,
        modified_stoi: modified_stoi(&cm, &dm, false)?.value,
        estoi: stoi(&c, &d, true)?.value,
        modified_estoi: modified_stoi(&cm, &dm, true)?.value,
    })
}

fn utterance_points(u: &Utterance, cfg: &StftConfig) -> Result<Vec<CorrelationPoint>> {
    let spec = stft(&u.mixture, cfg)?;
    let mask = ideal_ratio_mask(&stft(&u.clean, cfg)?.magnitude().mags, &stft(&u.interferer, cfg)?.magnitude().mags)?;
    let enhanced = apply_mask(&spec, &mask)?;
    Ok(vec![
        score_pair(&u.id, "noisy", &u.clean, &u.mixture, cfg)?,
        score_pair(&u.id, "irm", &u.clean, &enhanced, cfg)?,
    ])
}

/// Scores the noisy and IRM-enhanced version of every selected utterance.
pub fn correlate(manifest: &Manifest, sel: Selection) -> Result<CorrelationReport> {
    let utts = load_utterances(manifest, sel, false)?;
    let cfg = manifest.header.stft;
    let points: Vec<CorrelationPoint> = utts
        .par_iter()
        .map(|u| utterance_points(u, &cfg).map_err(|e| e.for_utterance(&u.id)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    report(points)
}

pub fn report(points: Vec<CorrelationPoint>) -> Result<CorrelationReport> {
    let col = |f: fn(&CorrelationPoint) -> f64| points.iter().map(f).collect::<Vec<_>>();
    let r_classical = pearson(&col(|p| p.stoi), &col(|p| p.modified_stoi))?;
    let r_extended = pearson(&col(|p| p.estoi), &col(|p| p.modified_estoi))?;
    Ok(CorrelationReport {
        points,
        r_classical,
        r_extended,
    })
}

impl CorrelationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,signal,stoi,modified_stoi,estoi,modified_estoi\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                p.id, p.signal, p.stoi, p.modified_stoi, p.estoi, p.modified_estoi
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "{} signal pairs\nPearson r (STOI vs modified STOI): {:.4}\nPearson r (ESTOI vs modified ESTOI): {:.4}\n",
            self.points.len(),
            self.r_classical,
            self.r_extended
        )
    }
}
