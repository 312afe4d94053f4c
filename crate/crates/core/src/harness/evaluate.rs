//! Objective comparison of the noisy input, trained models and the ideal
//! ratio mask.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{load_utterances, Selection, Utterance};
use super::train::check_compatible;
use crate::data::Manifest;
use crate::dsp::{stft, MagnitudeSpectrogram, Spectrogram, Waveform};
use crate::error::{Error, Result};
use crate::metrics::{modified_stoi, si_sdr, stoi};
use crate::model::{apply_mask, ideal_ratio_mask, MaskEstimator, Mode, Trainer};

pub const NOISY: &str = "noisy";
pub const IRM: &str = "irm";

/// Listed in the table legend as not computed by this tool.
pub const UNAVAILABLE_METRICS: [&str; 5] = ["PESQ", "VISQOL", "CSIG", "CBAK", "COVL"];

/// A trained model under evaluation.
#[derive(Debug, Clone)]
pub struct System {
    pub name: String,
    pub model: MaskEstimator,
    pub mode: Mode,
}

impl System {
    /// The best-validation parameters of a checkpoint, named after its
    /// directory (or file stem when the file is not the default name).
    pub fn from_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let trainer = Trainer::load(path)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
        let name = match path.parent().and_then(|p| p.file_name()).and_then(|s| s.to_str()) {
            Some(dir) if stem == "model" => dir.to_string(),
            _ => stem.to_string(),
        };
        Ok(Self {
            name,
            model: trainer.best,
            mode: trainer.config.mode,
        })
    }
}

/// Each field is `None` when the metric is undefined for the utterance
/// (too short after silence removal, or a silent reference).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub stoi: Option<f64>,
    pub estoi: Option<f64>,
    pub modified_stoi: Option<f64>,
    pub modified_estoi: Option<f64>,
    pub si_sdr: Option<f64>,
}

impl MetricSet {
    pub const NAMES: [&'static str; 5] = ["stoi", "estoi", "modified_stoi", "modified_estoi", "si_sdr"];

    pub fn values(&self) -> [Option<f64>; 5] {
        [self.stoi, self.estoi, self.modified_stoi, self.modified_estoi, self.si_sdr]
    }

    fn from_values(v: [Option<f64>; 5]) -> Self {
        Self {
            stoi: v[0],
            estoi: v[1],
            modified_stoi: v[2],
            modified_estoi: v[3],
            si_sdr: v[4],
        }
    }
}

fn undefined_is_none(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::TooShort(_) | Error::SilentReference(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Scores an estimate against the clean reference. The waveforms may differ
/// in length (resynthesis drops a partial trailing frame); the common prefix
/// is used. The magnitudes must share a shape.
pub fn score(
    clean: &Waveform,
    estimate: &Waveform,
    clean_mag: &MagnitudeSpectrogram,
    est_mag: &MagnitudeSpectrogram,
) -> Result<MetricSet> {
    let n = clean.len().min(estimate.len());
    let (c, e) = (clean.truncated(n), estimate.truncated(n));
    Ok(MetricSet {
        stoi: undefined_is_none(stoi(&c, &e, false).map(|s| s.value))?,
        estoi: undefined_is_none(stoi(&c, &e, true).map(|s| s.value))?,
        modified_stoi: undefined_is_none(modified_stoi(clean_mag, est_mag, false).map(|s| s.value))?,
        modified_estoi: undefined_is_none(modified_stoi(clean_mag, est_mag, true).map(|s| s.value))?,
        si_sdr: undefined_is_none(si_sdr(&c, &e))?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    pub snr_db: i32,
    pub system: String,
    #[serde(flatten)]
    pub metrics: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub system: String,
    pub utterances: usize,
    /// Mean over utterances where the metric is defined.
    #[serde(flatten)]
    pub means: MetricSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub systems: Vec<String>,
    pub records: Vec<UtteranceRecord>,
    pub aggregates: Vec<Aggregate>,
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line<'a> {
    Utterance(&'a UtteranceRecord),
    Aggregate(&'a Aggregate),
}

/// Output of a mask on one utterance.
struct Masked {
    wav: Waveform,
    mag: MagnitudeSpectrogram,
}

fn masked(spec: &Spectrogram, mask: &Array2<f64>) -> Result<Masked> {
    let mut mag = spec.magnitude();
    mag.mags *= mask;
    Ok(Masked {
        wav: apply_mask(spec, mask)?,
        mag,
    })
}

fn evaluate_utterance(u: &Utterance, manifest: &Manifest, systems: &[System]) -> Result<Vec<UtteranceRecord>> {
    let cfg = &manifest.header.stft;
    let noisy_spec = stft(&u.mixture, cfg)?;
    let clean_mag = stft(&u.clean, cfg)?.magnitude();
    let interferer_mag = stft(&u.interferer, cfg)?.magnitude();
    let record = |system: &str, metrics| UtteranceRecord {
        id: u.id.clone(),
        snr_db: u.snr_db,
        system: system.to_string(),
        metrics,
    };

    let mut out = vec![record(NOISY, score(&u.clean, &u.mixture, &clean_mag, &noisy_spec.magnitude())?)];
    let noisy_mag = noisy_spec.magnitude().mags;
    for sys in systems {
        let visual = match sys.mode {
            Mode::Av => u
                .aligned_visual(&noisy_spec)?
                .ok_or_else(|| Error::Manifest("visual features were not loaded".into()))?,
            Mode::Ao => Array2::zeros((noisy_spec.num_frames(), sys.model.config().visual.input_dim)),
        };
        let mask = sys.model.forward(&noisy_mag, &visual)?;
        let m = masked(&noisy_spec, &mask)?;
        out.push(record(&sys.name, score(&u.clean, &m.wav, &clean_mag, &m.mag)?));
    }
    let irm = masked(&noisy_spec, &ideal_ratio_mask(&clean_mag.mags, &interferer_mag.mags)?)?;
    out.push(record(IRM, score(&u.clean, &irm.wav, &clean_mag, &irm.mag)?));
    Ok(out)
}

fn aggregate(system: &str, records: &[UtteranceRecord]) -> Aggregate {
    let mine: Vec<&UtteranceRecord> = records.iter().filter(|r| r.system == system).collect();
    let mut means = [None; 5];
    for (k, slot) in means.iter_mut().enumerate() {
        let vals: Vec<f64> = mine.iter().filter_map(|r| r.metrics.values()[k]).collect();
        if !vals.is_empty() {
            *slot = Some(vals.iter().sum::<f64>() / vals.len() as f64);
        }
    }
    Aggregate {
        system: system.to_string(),
        utterances: mine.len(),
        means: MetricSet::from_values(means),
    }
}

/// Evaluates every utterance in `sel` for the noisy input, each system and
/// the ideal ratio mask.
pub fn evaluate(manifest: &Manifest, sel: Selection, systems: &[System]) -> Result<EvalReport> {
    let mut names = vec![NOISY.to_string()];
    for s in systems {
        check_compatible(s.model.config(), s.mode, manifest)?;
        if names.contains(&s.name) || s.name == IRM {
            return Err(Error::InvalidArgument(format!("duplicate system name {:?}", s.name)));
        }
        names.push(s.name.clone());
    }
    names.push(IRM.to_string());
    let need_visual = systems.iter().any(|s| s.mode == Mode::Av);
    let utts = load_utterances(manifest, sel, need_visual)?;
    let per_utt: Vec<Vec<UtteranceRecord>> = utts
        .par_iter()
        .map(|u| evaluate_utterance(u, manifest, systems).map_err(|e| e.for_utterance(&u.id)))
        .collect::<Result<_>>()?;
    let records: Vec<UtteranceRecord> = per_utt.into_iter().flatten().collect();
    let aggregates = names.iter().map(|n| aggregate(n, &records)).collect();
    Ok(EvalReport {
        systems: names,
        records,
        aggregates,
    })
}

impl EvalReport {
    pub fn aggregate(&self, system: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.system == system)
    }

    pub fn records_for<'a>(&'a self, system: &'a str) -> impl Iterator<Item = &'a UtteranceRecord> + 'a {
        self.records.iter().filter(move |r| r.system == system)
    }

    /// One JSON object per line: utterance records, then aggregates.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        let lines = self
            .records
            .iter()
            .map(Line::Utterance)
            .chain(self.aggregates.iter().map(Line::Aggregate));
        for line in lines {
            out.push_str(&serde_json::to_string(&line).map_err(|e| Error::Numeric(e.to_string()))?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Plain-text table of aggregate means, one row per system.
    pub fn render_table(&self) -> String {
        let headers = ["System", "STOI", "ESTOI", "mSTOI", "mESTOI", "SI-SDR"];
        let width = self.systems.iter().map(String::len).max().unwrap_or(0).max(6);
        let mut out = format!("{:<width$}", headers[0]);
        for h in &headers[1..] {
            let _ = write!(out, " {h:>8}");
        }
        out.push('\n');
        out.push_str(&"-".repeat(width + 9 * (headers.len() - 1)));
        out.push('\n');
        for a in &self.aggregates {
            let _ = write!(out, "{:<width$}", a.system);
            for (k, v) in a.means.values().iter().enumerate() {
                let cell = match (v, k) {
                    (None, _) => "n/a".to_string(),
                    (Some(v), 4) => format!("{v:.2}"),
                    (Some(v), _) => format!("{v:.4}"),
                };
                let _ = write!(out, " {cell:>8}");
            }
            out.push('\n');
        }
        let n = self.aggregates.first().map_or(0, |a| a.utterances);
        let _ = writeln!(out, "\n{n} utterances. SI-SDR in dB; mSTOI/mESTOI are computed on 16 kHz magnitude spectra.");
        let _ = writeln!(out, "Not computed: {}.", UNAVAILABLE_METRICS.join(", "));
        out
    }
}
