//! Training loop with per-epoch validation and best-model tracking.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::MaskEstimator;
use super::optim::{Adam, AdamConfig};
use crate::autograd::{Tape, Tensor};
use crate::dsp::{MagnitudeSpectrogram, StftConfig, WindowKind};
use crate::error::{Error, Result};
use crate::losses::{LossConfig, LossKind};
use crate::metrics::{modified_stoi, StoiConfig};

/// Whether the visual stream is used. Audio-only runs feed a zero track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Av,
    Ao,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Av => "av",
            Mode::Ao => "ao",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "av" => Ok(Mode::Av),
            "ao" => Ok(Mode::Ao),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?} (av, ao)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub optimizer: AdamConfig,
    pub mode: Mode,
    pub epochs: usize,
    /// Utterances whose gradients are averaged per update.
    pub batch_size: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    pub shuffle: bool,
    pub sample_rate: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            optimizer: AdamConfig::default(),
            mode: Mode::Av,
            epochs: 10,
            batch_size: 1,
            seed: 0,
            shuffle: true,
            sample_rate: 16_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.optimizer.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        Ok(())
    }
}

/// One utterance: noisy and clean magnitudes (`F x T`) and, for audio-visual
/// runs, visual features already aligned to the STFT frames (`T x D`).
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub noisy: Array2<f64>,
    pub clean: Array2<f64>,
    pub visual: Option<Array2<f64>>,
}

impl Example {
    pub fn frames(&self) -> usize {
        self.noisy.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_modified_stoi: f64,
}

/// Analysis settings implied by a spectrogram with `bins` rows.
pub fn stft_for_bins(bins: usize) -> Result<StftConfig> {
    if bins == StftConfig::SPEECH_16K.num_bins() {
        return Ok(StftConfig::SPEECH_16K);
    }
    if bins < 2 {
        return Err(Error::Shape("spectrogram needs at least two bins".into()));
    }
    let fft = 2 * (bins - 1);
    StftConfig::new(fft, (fft / 4).max(1), fft, WindowKind::Hann)
}

/// Mean modified STOI of `estimates` against the examples' clean magnitudes.
pub fn mean_modified_stoi(examples: &[Example], estimates: &[Array2<f64>], sample_rate: u32) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument("no examples to score".into()));
    }
    let mut total = 0.0;
    for (ex, est) in examples.iter().zip(estimates) {
        let stft = stft_for_bins(ex.clean.nrows())?;
        let score = (|| {
            let clean = MagnitudeSpectrogram::new(ex.clean.clone(), stft, sample_rate)?;
            let est = MagnitudeSpectrogram::new(est.clone(), stft, sample_rate)?;
            modified_stoi(&clean, &est, false)
        })()
        .map_err(|e| e.for_utterance(&ex.id))?;
        total += score.value;
    }
    Ok(total / examples.len() as f64)
}

/// Modified STOI of the unprocessed mixtures.
pub fn noisy_baseline_stoi(examples: &[Example], sample_rate: u32) -> Result<f64> {
    let noisy: Vec<Array2<f64>> = examples.iter().map(|e| e.noisy.clone()).collect();
    mean_modified_stoi(examples, &noisy, sample_rate)
}

/// Mean loss of the unprocessed mixtures, the level a model must beat.
pub fn noisy_baseline_loss(examples: &[Example], loss: &LossConfig, sample_rate: u32) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument("no examples to score".into()));
    }
    let mut total = 0.0;
    for ex in examples {
        let value = (|| {
            let mut tape = Tape::new();
            let est = tape.constant(Tensor::from_array2(&ex.noisy));
            let clean = tape.constant(Tensor::from_array2(&ex.clean));
            let v = loss.apply(&mut tape, est, clean, sample_rate)?.value;
            tape.value(v).item()
        })()
        .map_err(|e| e.for_utterance(&ex.id))?;
        total += value;
    }
    Ok(total / examples.len() as f64)
}

#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: MaskEstimator,
    pub best: MaskEstimator,
    pub optimizer: Adam,
    pub config: TrainConfig,
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
    pub best_val_loss: f64,
    pub(crate) rng: ChaCha8Rng,
}

struct Evaluation {
    loss: f64,
    masked: Vec<Array2<f64>>,
}

impl Trainer {
    pub fn new(model: MaskEstimator, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = Adam::new(config.optimizer, model.params())?;
        Ok(Self {
            best: model.clone(),
            model,
            optimizer,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            epoch: 0,
            history: Vec::new(),
            best_val_loss: f64::INFINITY,
        })
    }

    fn visual_for(&self, ex: &Example) -> Result<Array2<f64>> {
        let dim = self.model.config().visual.input_dim;
        match (self.config.mode, &ex.visual) {
            (Mode::Ao, _) => Ok(Array2::zeros((ex.frames(), dim))),
            (Mode::Av, Some(v)) => Ok(v.clone()),
            (Mode::Av, None) => Err(Error::InvalidArgument(
                "audio-visual training needs visual features".into(),
            )
            .for_utterance(&ex.id)),
        }
    }

    /// Rejects examples the loss cannot handle, naming the utterance.
    pub fn check_examples(&self, examples: &[Example]) -> Result<()> {
        if examples.is_empty() {
            return Err(Error::InvalidArgument("no training examples".into()));
        }
        let n = StoiConfig::new(self.config.loss.stoi_variant).segment_len;
        for ex in examples {
            let check = || -> Result<()> {
                if ex.noisy.dim() != ex.clean.dim() {
                    return Err(Error::Shape(format!(
                        "noisy {:?} vs clean {:?}",
                        ex.noisy.dim(),
                        ex.clean.dim()
                    )));
                }
                if self.config.loss.kind == LossKind::Stoi {
                    if ex.frames() < n {
                        return Err(Error::TooShort(format!(
                            "{} frames, the STOI loss needs at least {n}",
                            ex.frames()
                        )));
                    }
                    if ex.clean.iter().all(|v| *v == 0.0) {
                        return Err(Error::SilentReference("clean magnitude is all zero".into()));
                    }
                }
                Ok(())
            };
            check().map_err(|e| e.for_utterance(&ex.id))?;
            self.visual_for(ex)?;
        }
        Ok(())
    }

    /// Loss and (optionally) parameter gradients for one example.
    fn example_pass(&self, ex: &Example, with_grads: bool) -> Result<(f64, Option<Vec<Tensor>>, Array2<f64>)> {
        let visual = self.visual_for(ex)?;
        let mut tape = Tape::new();
        let pass = self.model.forward_on(&mut tape, &ex.noisy, &visual, with_grads)?;
        let clean = tape.constant(Tensor::from_array2(&ex.clean));
        let loss = self
            .config
            .loss
            .apply(&mut tape, pass.masked, clean, self.config.sample_rate)?;
        let value = tape.value(loss.value).item()?;
        if !value.is_finite() {
            return Err(Error::Numeric(format!("loss is {value}")));
        }
        let masked = tape.value(pass.masked).to_array2()?;
        if !with_grads {
            return Ok((value, None, masked));
        }
        tape.backward(loss.value)?;
        let grads = pass
            .params
            .iter()
            .zip(self.model.params())
            .map(|(v, p)| tape.grad(*v).unwrap_or_else(|| Tensor::zeros(p.value.shape())))
            .collect();
        Ok((value, Some(grads), masked))
    }

    fn evaluate_with(&self, examples: &[Example]) -> Result<Evaluation> {
        let mut loss = 0.0;
        let mut masked = Vec::with_capacity(examples.len());
        for ex in examples {
            let (l, _, m) = self.example_pass(ex, false).map_err(|e| e.for_utterance(&ex.id))?;
            loss += l;
            masked.push(m);
        }
        Ok(Evaluation {
            loss: loss / examples.len().max(1) as f64,
            masked,
        })
    }

    /// Mean loss of the current model over `examples` without updating it.
    pub fn evaluate(&self, examples: &[Example]) -> Result<f64> {
        self.check_examples(examples)?;
        Ok(self.evaluate_with(examples)?.loss)
    }

    fn record(&mut self, train_loss: f64, val: &[Example]) -> Result<EpochRecord> {
        let eval = self.evaluate_with(val)?;
        let record = EpochRecord {
            epoch: self.epoch,
            train_loss,
            val_loss: eval.loss,
            val_modified_stoi: mean_modified_stoi(val, &eval.masked, self.config.sample_rate)?,
        };
        if eval.loss < self.best_val_loss {
            self.best_val_loss = eval.loss;
            self.best = self.model.clone();
        }
        self.history.push(record);
        Ok(record)
    }

    fn train_epoch(&mut self, train: &[Example]) -> Result<f64> {
        let mut order: Vec<usize> = (0..train.len()).collect();
        if self.config.shuffle {
            order.shuffle(&mut self.rng);
        }
        let mut total = 0.0;
        for batch in order.chunks(self.config.batch_size) {
            let mut acc: Vec<Tensor> = self
                .model
                .params()
                .iter()
                .map(|p| Tensor::zeros(p.value.shape()))
                .collect();
            for &i in batch {
                let ex = &train[i];
                let (loss, grads, _) = self.example_pass(ex, true).map_err(|e| e.for_utterance(&ex.id))?;
                total += loss;
                for (a, g) in acc.iter_mut().zip(grads.expect("gradients requested")) {
                    a.data_mut().iter_mut().zip(g.data()).for_each(|(x, y)| *x += y);
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for a in &mut acc {
                a.data_mut().iter_mut().for_each(|x| *x *= scale);
            }
            self.optimizer.update(self.model.params_mut(), &acc)?;
        }
        Ok(total / train.len() as f64)
    }

    /// Trains until `config.epochs` epochs have run in total, recording the
    /// untrained model as epoch 0 on a fresh trainer. `on_epoch` sees each
    /// record as it is produced.
    pub fn fit(
        &mut self,
        train: &[Example],
        val: &[Example],
        mut on_epoch: impl FnMut(&Trainer, &EpochRecord) -> Result<()>,
    ) -> Result<()> {
        self.check_examples(train)?;
        self.check_examples(val)?;
        if self.history.is_empty() {
            let initial = self.evaluate_with(train)?.loss;
            let rec = self.record(initial, val)?;
            on_epoch(self, &rec)?;
        }
        while self.epoch < self.config.epochs {
            let train_loss = self.train_epoch(train)?;
            self.epoch += 1;
            let rec = self.record(train_loss, val)?;
            on_epoch(self, &rec)?;
        }
        Ok(())
    }
}
