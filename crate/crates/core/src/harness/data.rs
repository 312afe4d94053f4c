//! Loading manifest utterances into memory.

use rayon::prelude::*;

use crate::data::{load_wav_at, read_features, Manifest, ManifestEntry, Split, VisualFeatureTrack};
use crate::dsp::{stft, Spectrogram, Waveform};
use crate::error::{Error, Result};
use crate::model::{upsample_visual, Example, Mode};

/// Which manifest entries a command works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    One(Split),
    All,
}

impl std::str::FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            Ok(Selection::All)
        } else {
            s.parse().map(Selection::One)
        }
    }
}

pub fn select(manifest: &Manifest, sel: Selection) -> Vec<&ManifestEntry> {
    match sel {
        Selection::One(split) => manifest.split(split),
        Selection::All => manifest.entries.iter().collect(),
    }
}

/// The signals of one mixture.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub snr_db: i32,
    pub clean: Waveform,
    /// The interferer as it was added to the mixture.
    pub interferer: Waveform,
    pub mixture: Waveform,
    pub visual: Option<VisualFeatureTrack>,
}

impl Utterance {
    /// Visual features aligned to the frames of `spec`.
    pub fn aligned_visual(&self, spec: &Spectrogram) -> Result<Option<ndarray::Array2<f64>>> {
        let hop = spec.config.hop as f64 / f64::from(spec.sample_rate);
        self.visual
            .as_ref()
            .map(|v| upsample_visual(v, spec.num_frames(), hop))
            .transpose()
    }
}

/// Reads one entry. Visual features are only touched when `with_visual`.
pub fn load_utterance(manifest: &Manifest, entry: &ManifestEntry, with_visual: bool) -> Result<Utterance> {
    let sr = manifest.header.sample_rate;
    let load = || -> Result<Utterance> {
        let visual = if with_visual {
            let track = read_features(manifest.resolve(&entry.visual_path), manifest.header.visual_fps)?;
            if track.dim() != manifest.header.visual_dim {
                return Err(Error::Manifest(format!(
                    "visual features have width {}, the manifest says {}",
                    track.dim(),
                    manifest.header.visual_dim
                )));
            }
            Some(track)
        } else {
            None
        };
        let utt = Utterance {
            id: entry.utterance_id.clone(),
            snr_db: entry.snr_db,
            clean: load_wav_at(manifest.resolve(&entry.clean_path), sr, false)?,
            interferer: load_wav_at(manifest.resolve(&entry.interferer_path), sr, false)?,
            mixture: load_wav_at(manifest.resolve(&entry.mixture_path), sr, false)?,
            visual,
        };
        if utt.clean.len() != utt.mixture.len() || utt.interferer.len() != utt.mixture.len() {
            return Err(Error::Manifest(format!(
                "signal lengths differ: clean {}, interferer {}, mixture {}",
                utt.clean.len(),
                utt.interferer.len(),
                utt.mixture.len()
            )));
        }
        Ok(utt)
    };
    load().map_err(|e| e.for_utterance(&entry.utterance_id))
}

pub fn load_utterances(manifest: &Manifest, sel: Selection, with_visual: bool) -> Result<Vec<Utterance>> {
    let entries = select(manifest, sel);
    if entries.is_empty() {
        return Err(Error::Manifest(format!("no utterances in {sel:?}")));
    }
    entries
        .par_iter()
        .map(|e| load_utterance(manifest, e, with_visual))
        .collect()
}

/// Training examples for a split: noisy and clean magnitudes plus, for
/// audio-visual runs, frame-aligned visual features.
pub fn load_examples(manifest: &Manifest, split: Split, mode: Mode) -> Result<Vec<Example>> {
    let utts = load_utterances(manifest, Selection::One(split), mode == Mode::Av)?;
    utts.par_iter()
        .map(|u| {
            let build = || -> Result<Example> {
                let noisy = stft(&u.mixture, &manifest.header.stft)?;
                let clean = stft(&u.clean, &manifest.header.stft)?;
                Ok(Example {
                    id: u.id.clone(),
                    visual: u.aligned_visual(&noisy)?,
                    noisy: noisy.magnitude().mags,
                    clean: clean.magnitude().mags,
                })
            };
            build().map_err(|e| e.for_utterance(&u.id))
        })
        .collect()
}
