//! Binary checkpoint container.
//!
//! Layout (little endian): magic `AVSECKPT`, `u32` version, `u64` length and
//! JSON metadata, current then best parameter sets (each a `u32` count of
//! name / shape / `f32` blobs), Adam step and moments as `f64`, and the
//! shuffle RNG state.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::network::{MaskEstimator, NamedParam};
use super::optim::Adam;
use super::train::{EpochRecord, TrainConfig, Trainer};
use crate::autograd::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"AVSECKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    model: ModelConfig,
    train: TrainConfig,
    epoch: usize,
    history: Vec<EpochRecord>,
    best_val_loss: Option<f64>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn write_params(out: &mut Vec<u8>, params: &[NamedParam]) {
    out.extend((params.len() as u32).to_le_bytes());
    for p in params {
        out.extend((p.name.len() as u32).to_le_bytes());
        out.extend(p.name.as_bytes());
        let shape = p.value.shape();
        out.extend((shape.len() as u32).to_le_bytes());
        for d in shape {
            out.extend((*d as u64).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend((*v as f32).to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() < n {
            return Err(bad("file is truncated"));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| bad("length overflows"))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| bad("length overflows"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }

    fn params(&mut self) -> Result<Vec<NamedParam>> {
        let count = self.u32()? as usize;
        let mut out = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = self.u32()? as usize;
            let name = String::from_utf8(self.take(name_len)?.to_vec())
                .map_err(|_| bad("parameter name is not UTF-8"))?;
            let ndim = self.u32()? as usize;
            let shape = (0..ndim).map(|_| self.len()).collect::<Result<Vec<_>>>()?;
            let numel = shape
                .iter()
                .try_fold(1usize, |a, d| a.checked_mul(*d))
                .ok_or_else(|| bad("shape overflows"))?;
            let bytes = self.take(numel.checked_mul(4).ok_or_else(|| bad("shape overflows"))?)?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("chunk of 4"))))
                .collect();
            out.push(NamedParam {
                name,
                value: Tensor::new(shape, data)?,
            });
        }
        Ok(out)
    }
}

impl Trainer {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = Meta {
            model: *self.model.config(),
            train: self.config,
            epoch: self.epoch,
            history: self.history.clone(),
            best_val_loss: self.best_val_loss.is_finite().then_some(self.best_val_loss),
        };
        let json = serde_json::to_vec(&meta).map_err(|e| bad(e.to_string()))?;
        let mut out = Vec::new();
        out.extend(CHECKPOINT_MAGIC);
        out.extend(CHECKPOINT_VERSION.to_le_bytes());
        out.extend((json.len() as u64).to_le_bytes());
        out.extend(json);
        write_params(&mut out, self.model.params());
        write_params(&mut out, self.best.params());
        out.extend(self.optimizer.step.to_le_bytes());
        for moments in [&self.optimizer.m, &self.optimizer.v] {
            for v in moments.iter().flatten() {
                out.extend(v.to_le_bytes());
            }
        }
        out.extend(self.rng.get_seed());
        out.extend(self.rng.get_stream().to_le_bytes());
        out.extend(self.rng.get_word_pos().to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes };
        if r.take(8).ok() != Some(CHECKPOINT_MAGIC.as_slice()) {
            return Err(bad("not a checkpoint file"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let meta_len = r.len()?;
        let meta: Meta = serde_json::from_slice(r.take(meta_len)?).map_err(|e| bad(e.to_string()))?;
        meta.train.validate()?;
        let model = MaskEstimator::from_parts(meta.model, r.params()?)?;
        let best = MaskEstimator::from_parts(meta.model, r.params()?)?;
        let mut optimizer = Adam::new(meta.train.optimizer, model.params())?;
        optimizer.step = r.u64()?;
        for moments in [&mut optimizer.m, &mut optimizer.v] {
            for m in moments.iter_mut() {
                *m = r.f64s(m.len())?;
            }
        }
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::from_seed(r.array()?);
        rng.set_stream(r.u64()?);
        rng.set_word_pos(u128::from_le_bytes(r.array()?));
        if !r.buf.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(Trainer {
            model,
            best,
            optimizer,
            config: meta.train,
            epoch: meta.epoch,
            history: meta.history,
            best_val_loss: meta.best_val_loss.unwrap_or(f64::INFINITY),
            rng,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{LossConfig, LossKind};
    use crate::model::train::tests::{tiny_model, toy_examples};
    use crate::model::AdamConfig;

    fn config(epochs: usize) -> TrainConfig {
        TrainConfig {
            loss: LossConfig::new(LossKind::Stoi),
            optimizer: AdamConfig {
                learning_rate: 2e-3,
                ..AdamConfig::default()
            },
            epochs,
            seed: 5,
            batch_size: 2,
            sample_rate: 2_000,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn round_trip_preserves_forward() {
        let data = toy_examples(4, 32, 1);
        let mut tr = Trainer::new(tiny_model(2), config(1)).unwrap();
        tr.fit(&data[..3], &data[3..], |_, _| Ok(())).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        tr.save(&path).unwrap();
        let back = Trainer::load(&path).unwrap();
        let vis = data[0].visual.clone().unwrap();
        assert_eq!(
            tr.model.forward(&data[0].noisy, &vis).unwrap(),
            back.model.forward(&data[0].noisy, &vis).unwrap()
        );
        assert_eq!(back.history, tr.history);
        assert_eq!(back.best, tr.best);
        assert_eq!(back.optimizer, tr.optimizer);
    }

    #[test]
    fn resumed_training_is_bit_identical() {
        let data = toy_examples(5, 32, 2);
        let (train, val) = data.split_at(4);
        let mut straight = Trainer::new(tiny_model(4), config(3)).unwrap();
        straight.fit(train, val, |_, _| Ok(())).unwrap();

        let mut first = Trainer::new(tiny_model(4), config(1)).unwrap();
        first.fit(train, val, |_, _| Ok(())).unwrap();
        let mut resumed = Trainer::from_bytes(&first.to_bytes().unwrap()).unwrap();
        resumed.config.epochs = 3;
        resumed.fit(train, val, |_, _| Ok(())).unwrap();

        assert_eq!(resumed.history, straight.history);
        assert_eq!(resumed.model, straight.model);
        assert_eq!(resumed.best, straight.best);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let tr = Trainer::new(tiny_model(1), config(1)).unwrap();
        let bytes = tr.to_bytes().unwrap();
        assert!(matches!(Trainer::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Checkpoint(_))));
        assert!(matches!(Trainer::from_bytes(b"NOTACKPT...."), Err(Error::Checkpoint(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Trainer::from_bytes(&extra).is_err());
    }
}
