//! The training experiment: manifest in, checkpoint and history out.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::data::load_examples;
use crate::data::{Manifest, Split};
use crate::error::{Error, Result};
use crate::model::{EpochRecord, MaskEstimator, Mode, ModelConfig, TrainConfig, Trainer};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.jsonl";

/// Model and optimisation settings for one run, read from TOML.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

/// Rejects models whose input geometry does not fit the corpus.
pub fn check_compatible(model: &ModelConfig, mode: Mode, manifest: &Manifest) -> Result<()> {
    let bins = manifest.header.stft.num_bins();
    if model.audio.freq_bins < bins {
        return Err(Error::Config(format!(
            "the model takes {} frequency bins, the corpus has {bins}",
            model.audio.freq_bins
        )));
    }
    if mode == Mode::Av && model.visual.input_dim != manifest.header.visual_dim {
        return Err(Error::Config(format!(
            "the model expects {}-dimensional visual features, the corpus has {}",
            model.visual.input_dim, manifest.header.visual_dim
        )));
    }
    Ok(())
}

#[derive(Debug)]
pub struct TrainRun {
    pub trainer: Trainer,
    pub checkpoint: PathBuf,
    pub history: PathBuf,
}

/// Trains on the manifest's train split, validating on val. The checkpoint
/// is rewritten after every epoch; `resume` continues from an earlier one.
pub fn run_training(
    manifest: &Manifest,
    cfg: &RunConfig,
    out_dir: impl AsRef<Path>,
    resume: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainRun> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut trainer = match resume {
        Some(path) => {
            let mut t = Trainer::load(path)?;
            t.config.epochs = cfg.train.epochs;
            t
        }
        None => {
            let mut train = cfg.train;
            train.sample_rate = manifest.header.sample_rate;
            Trainer::new(MaskEstimator::build(cfg.model)?, train)?
        }
    };
    let mode = trainer.config.mode;
    check_compatible(trainer.model.config(), mode, manifest)?;
    let train = load_examples(manifest, Split::Train, mode)?;
    let val = load_examples(manifest, Split::Val, mode)?;

    let checkpoint = out_dir.join(CHECKPOINT_FILE);
    let history = out_dir.join(HISTORY_FILE);
    let mut log = fs::File::create(&history).map_err(|e| Error::io(&history, e))?;
    for rec in &trainer.history {
        write_record(&mut log, &history, rec)?;
    }
    trainer.fit(&train, &val, |t, rec| {
        write_record(&mut log, &history, rec)?;
        t.save(&checkpoint)?;
        on_epoch(rec);
        Ok(())
    })?;
    Ok(TrainRun {
        trainer,
        checkpoint,
        history,
    })
}

fn write_record(log: &mut fs::File, path: &Path, rec: &EpochRecord) -> Result<()> {
    let line = serde_json::to_string(rec).map_err(|e| Error::Numeric(e.to_string()))?;
    writeln!(log, "{line}").map_err(|e| Error::io(path, e))
}
