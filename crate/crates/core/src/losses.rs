//! Training objectives on magnitude spectrograms.
//!
//! Every loss takes an estimate and a reference of shape `F x T` on the same
//! tape. The intelligibility loss is the negated modified STOI, rebuilt from
//! differentiable operators so its gradient reaches the estimate.

use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Tensor, Var};
use crate::dsp::thirdoct;
use crate::error::{Error, Result};
use crate::metrics::{StoiConfig, StoiVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    Mae,
    Stoi,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Mse => "mse",
            LossKind::Mae => "mae",
            LossKind::Stoi => "stoi",
        })
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "mae" => Ok(LossKind::Mae),
            "stoi" => Ok(LossKind::Stoi),
            _ => Err(Error::InvalidArgument(format!(
                "unknown loss '{s}' (expected mse, mae or stoi)"
            ))),
        }
    }
}

/// How squared errors are reduced by [`mse_loss`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MseMode {
    /// Mean of squared differences over all entries.
    #[default]
    Standard,
    /// Mean over frames of the L2 norm of each frame's difference.
    PerFrameL2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub kind: LossKind,
    pub mse_mode: MseMode,
    /// Only the modified variants are accepted.
    pub stoi_variant: StoiVariant,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::Mse,
            mse_mode: MseMode::Standard,
            stoi_variant: StoiVariant::ModifiedClassical,
        }
    }
}

impl LossConfig {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == LossKind::Stoi && !self.stoi_variant.is_modified() {
            return Err(Error::InvalidArgument(format!(
                "the intelligibility loss needs a modified variant, got {}",
                self.stoi_variant
            )));
        }
        Ok(())
    }

    /// Builds the configured loss on `tape`.
    pub fn apply(&self, tape: &mut Tape, est: Var, reference: Var, sample_rate: u32) -> Result<LossValue> {
        self.validate()?;
        match self.kind {
            LossKind::Mse => Ok(LossValue::plain(mse_loss(tape, est, reference, self.mse_mode)?)),
            LossKind::Mae => Ok(LossValue::plain(mae_loss(tape, est, reference)?)),
            LossKind::Stoi => stoi_loss(
                tape,
                est,
                reference,
                &StoiConfig::new(self.stoi_variant),
                sample_rate,
            ),
        }
    }
}

/// Scalar loss node plus the number of undefined correlations that were
/// counted as zero.
#[derive(Debug, Clone, Copy)]
pub struct LossValue {
    pub value: Var,
    pub degenerate: usize,
}

impl LossValue {
    fn plain(value: Var) -> Self {
        Self { value, degenerate: 0 }
    }
}

fn check_pair(tape: &Tape, est: Var, reference: Var) -> Result<(usize, usize)> {
    let (se, sr) = (tape.shape(est), tape.shape(reference));
    if se != sr || se.len() != 2 {
        return Err(Error::Shape(format!(
            "loss operands must be matching F x T matrices, got {se:?} and {sr:?}"
        )));
    }
    if se[1] == 0 || se[0] == 0 {
        return Err(Error::Shape("loss operands are empty".into()));
    }
    Ok((se[0], se[1]))
}

pub fn mse_loss(tape: &mut Tape, est: Var, reference: Var, mode: MseMode) -> Result<Var> {
    check_pair(tape, est, reference)?;
    let d = tape.sub(est, reference)?;
    let sq = tape.square(d)?;
    match mode {
        MseMode::Standard => tape.mean(sq),
        MseMode::PerFrameL2 => {
            // sqrt of the column energy rather than l2_norm_axis, so identical
            // frames contribute a zero gradient instead of an error.
            let energy = tape.sum_axis(sq, 0)?;
            let norms = tape.sqrt(energy)?;
            tape.mean(norms)
        }
    }
}

pub fn mae_loss(tape: &mut Tape, est: Var, reference: Var) -> Result<Var> {
    check_pair(tape, est, reference)?;
    let d = tape.sub(est, reference)?;
    let a = tape.abs(d)?;
    tape.mean(a)
}

/// Mean of per-utterance scalar losses.
pub fn batch_mean(tape: &mut Tape, losses: &[Var]) -> Result<Var> {
    let (&first, rest) = losses
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let mut acc = first;
    for &l in rest {
        acc = tape.add(acc, l)?;
    }
    tape.mul_scalar(acc, 1.0 / losses.len() as f64)
}

/// Negated modified STOI between an estimated and a clean magnitude
/// spectrogram with `F = fft_size / 2 + 1` bins at `sample_rate`.
pub fn stoi_loss(
    tape: &mut Tape,
    est: Var,
    reference: Var,
    cfg: &StoiConfig,
    sample_rate: u32,
) -> Result<LossValue> {
    cfg.validate()?;
    if !cfg.variant.is_modified() {
        return Err(Error::InvalidArgument(format!(
            "the intelligibility loss needs a modified variant, got {}",
            cfg.variant
        )));
    }
    let (f, t) = check_pair(tape, est, reference)?;
    if f < 2 {
        return Err(Error::Shape("need at least two frequency bins".into()));
    }
    if t < cfg.segment_len {
        return Err(Error::TooShort(format!(
            "{t} frames is fewer than the segment length {}",
            cfg.segment_len
        )));
    }
    let nonneg = |v: Var| tape.value(v).data().iter().all(|&x| x >= 0.0);
    if !nonneg(est) || !nonneg(reference) {
        return Err(Error::InvalidArgument("magnitudes must be non-negative".into()));
    }
    if tape.value(reference).data().iter().all(|&x| x == 0.0) {
        return Err(Error::SilentReference("reference spectrogram is all zero".into()));
    }

    let obm = thirdoct(sample_rate, 2 * (f - 1), cfg.num_bands, cfg.min_center_freq)?;
    let obm = tape.constant(Tensor::from_array2(&obm.membership));
    let x = envelope_segments(tape, obm, reference, cfg.segment_len)?;
    let y = envelope_segments(tape, obm, est, cfg.segment_len)?;
    let (score, degenerate) = if cfg.variant.is_extended() {
        extended_score(tape, x, y)?
    } else {
        classical_score(tape, x, y, cfg.clip_factor())?
    };
    Ok(LossValue {
        value: tape.neg(score)?,
        degenerate,
    })
}

/// `J x I x N` stack of band envelope segments.
fn envelope_segments(tape: &mut Tape, obm: Var, mag: Var, n: usize) -> Result<Var> {
    let power = tape.square(mag)?;
    let bands = tape.matmul(obm, power)?;
    let env = tape.sqrt(bands)?;
    tape.segment(env, n)
}

fn constant_like(tape: &mut Tape, like: Var, data: Vec<f64>) -> Result<Var> {
    let t = Tensor::new(tape.shape(like).to_vec(), data)?;
    Ok(tape.constant(t))
}

fn indicator(flags: &[bool]) -> Vec<f64> {
    flags.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
}

/// Removes the mean along `axis` and scales to unit norm. Rows that are
/// constant (or zero) become zero; returns the normalised tensor and how many
/// rows that happened to.
fn normalize_axis(tape: &mut Tape, v: Var, axis: usize) -> Result<(Var, usize)> {
    let len = tape.shape(v)[axis];
    let mean = tape.mean_axis(v, axis)?;
    let mean = tape.upsample(mean, axis, len)?;
    let centred = tape.sub(v, mean)?;
    let norm = tape.l2_norm_axis(centred, axis)?;
    let raw = tape.l2_norm_axis(v, axis)?;
    let valid: Vec<bool> = tape
        .value(norm)
        .data()
        .iter()
        .zip(tape.value(raw).data())
        .map(|(&n, &r)| r > 0.0 && n > crate::metrics::DEGENERATE_REL * r)
        .collect();
    let degenerate = valid.iter().filter(|v| !**v).count();
    let invalid: Vec<f64> = valid.iter().map(|&v| if v { 0.0 } else { 1.0 }).collect();
    let pad = constant_like(tape, norm, invalid)?;
    let safe = tape.add(norm, pad)?;
    let safe = tape.upsample(safe, axis, len)?;
    let scaled = tape.div(centred, safe)?;
    let keep = constant_like(tape, norm, indicator(&valid))?;
    let keep = tape.upsample(keep, axis, len)?;
    Ok((tape.mul(scaled, keep)?, degenerate))
}

fn extended_score(tape: &mut Tape, x: Var, y: Var) -> Result<(Var, usize)> {
    let [j, _, n] = tape.shape(x)[..] else {
        unreachable!("segments are rank 3")
    };
    let (xr, dx) = normalize_axis(tape, x, 2)?;
    let (xn, _) = normalize_axis(tape, xr, 1)?;
    let (yr, dy) = normalize_axis(tape, y, 2)?;
    let (yn, _) = normalize_axis(tape, yr, 1)?;
    let prod = tape.mul(xn, yn)?;
    let total = tape.sum(prod)?;
    Ok((tape.mul_scalar(total, 1.0 / (n * j) as f64)?, dx + dy))
}

fn classical_score(tape: &mut Tape, x: Var, y: Var, clip: f64) -> Result<(Var, usize)> {
    let [j, i, n] = tape.shape(x)[..] else {
        unreachable!("segments are rank 3")
    };
    let nx = tape.l2_norm_axis(x, 2)?;
    let ny = tape.l2_norm_axis(y, 2)?;
    let zero: Vec<bool> = tape
        .value(nx)
        .data()
        .iter()
        .zip(tape.value(ny).data())
        .map(|(&a, &b)| a == 0.0 || b == 0.0)
        .collect();
    let pad = constant_like(tape, ny, indicator(&zero))?;
    let ny_safe = tape.add(ny, pad)?;
    let gain = tape.div(nx, ny_safe)?;
    let gain = tape.upsample(gain, 2, n)?;
    let scaled = tape.mul(y, gain)?;

    // min(y, c x) = -max(-y, -c x); ties pick the ceiling.
    let ceiling = tape.value(x).map(|v| -clip * v);
    let flipped = tape.neg(scaled)?;
    let flipped = tape.max_with_const(flipped, &ceiling)?;
    let clipped = tape.neg(flipped)?;

    let xm = tape.mean_axis(x, 2)?;
    let xm = tape.upsample(xm, 2, n)?;
    let xc = tape.sub(x, xm)?;
    let ym = tape.mean_axis(clipped, 2)?;
    let ym = tape.upsample(ym, 2, n)?;
    let yc = tape.sub(clipped, ym)?;
    let nxc = tape.l2_norm_axis(xc, 2)?;
    let nyc = tape.l2_norm_axis(yc, 2)?;
    let nclip = tape.l2_norm_axis(clipped, 2)?;

    let rel = crate::metrics::DEGENERATE_REL;
    let valid: Vec<bool> = (0..j * i)
        .map(|k| {
            !zero[k]
                && tape.value(nxc).data()[k] > rel * tape.value(nx).data()[k]
                && tape.value(nyc).data()[k] > rel * tape.value(nclip).data()[k]
        })
        .collect();
    let degenerate = valid.iter().filter(|v| !**v).count();
    let invalid: Vec<f64> = valid.iter().map(|&v| if v { 0.0 } else { 1.0 }).collect();
    let pad = constant_like(tape, nyc, invalid.clone())?;
    let nyc_safe = tape.add(nyc, pad)?;
    let pad = constant_like(tape, nxc, invalid)?;
    let nxc_safe = tape.add(nxc, pad)?;
    let denom = tape.mul(nxc_safe, nyc_safe)?;

    let prod = tape.mul(xc, yc)?;
    let num = tape.sum_axis(prod, 2)?;
    let corr = tape.div(num, denom)?;
    let keep = constant_like(tape, corr, indicator(&valid))?;
    let corr = tape.mul(corr, keep)?;
    let total = tape.sum(corr)?;
    Ok((tape.mul_scalar(total, 1.0 / (j * i) as f64)?, degenerate))
}
