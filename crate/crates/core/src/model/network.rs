//! The mask-estimation U-Net.
//!
//! Audio path: `ln(1 + |Y|)` is downsampled by stride-2 convolutions, then
//! passes through convolution blocks that each end in frequency pooling.
//! Visual path: a temporal convolution brings the per-frame features to the
//! encoder's time resolution, two pointwise layers follow, and the result is
//! tiled along frequency and concatenated at the bottleneck. The decoder
//! mirrors the encoder (upsampling frequency, concatenating skips) and
//! transposed convolutions restore the original resolution before a sigmoid.

use ndarray::Array2;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::autograd::{ConvGeometry, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Logit used for constant masks; the sigmoid of 20 is within 3e-9 of 1.
pub const SATURATED_LOGIT: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedParam {
    pub name: String,
    pub value: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskEstimator {
    config: ModelConfig,
    params: Vec<NamedParam>,
}

/// Parameter shapes in construction order.
fn layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, usize)> {
    // (name, shape, fan_in); fan_in 0 marks a bias.
    let mut out = Vec::new();
    let mut conv = |name: String, cout: usize, cin: usize, kh: usize, kw: usize, bias: bool| {
        out.push((format!("{name}.weight"), vec![cout, cin, kh, kw], cin * kh * kw));
        if bias {
            out.push((format!("{name}.bias"), vec![cout], 0));
        }
    };
    let d = cfg.audio.downsample_layers;
    let c0 = cfg.block_channels(0);
    for i in 0..d {
        conv(format!("audio.down{i}"), c0, if i == 0 { 1 } else { c0 }, 4, 4, true);
    }
    let mut cin = if d == 0 { 1 } else { c0 };
    for b in 0..cfg.audio.conv_blocks {
        let c = cfg.block_channels(b);
        conv(format!("audio.block{b}.conv1"), c, cin, 3, 3, true);
        conv(format!("audio.block{b}.conv2"), c, c, 3, 3, true);
        cin = c;
    }
    let v = cfg.visual;
    let kt = if d == 0 { 1 } else { 2 << d };
    conv("visual.temporal".into(), v.hidden_dim, v.input_dim, 1, kt, false);
    conv("visual.point1".into(), v.hidden_dim, v.hidden_dim, 1, 1, false);
    conv("visual.point2".into(), v.output_dim, v.hidden_dim, 1, 1, false);
    let mut below = cin + v.output_dim;
    for b in (0..cfg.audio.conv_blocks).rev() {
        let c = cfg.block_channels(b);
        let skip = if cfg.skip_connections { c } else { 0 };
        conv(format!("decoder.block{b}.conv1"), c, below + skip, 3, 3, true);
        conv(format!("decoder.block{b}.conv2"), c, c, 3, 3, true);
        below = c;
    }
    if d == 0 {
        conv("decoder.head".into(), 1, c0, 1, 1, true);
    }
    for i in 0..d {
        let cout = if i + 1 == d { 1 } else { c0 };
        // Transposed kernels are stored input-channel first.
        out.push((format!("decoder.up{i}.weight"), vec![c0, cout, 4, 4], c0 * 4));
        out.push((format!("decoder.up{i}.bias"), vec![cout], 0));
    }
    out
}

fn output_bias_name(cfg: &ModelConfig) -> String {
    match cfg.audio.downsample_layers {
        0 => "decoder.head.bias".into(),
        d => format!("decoder.up{}.bias", d - 1),
    }
}

/// Rounds to the nearest 32-bit float so checkpoints store parameters exactly.
pub(crate) fn to_f32_grid(t: &mut Tensor) {
    t.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
}

/// Inputs laid out for the graph, padded to the network's geometry.
#[derive(Debug, Clone)]
pub struct PreparedInput {
    /// `1 x F x T'`.
    pub noisy: Tensor,
    /// `D_in x 1 x T'`.
    pub visual: Tensor,
    pub bins: usize,
    pub frames: usize,
}

/// Result of [`MaskEstimator::forward_on`].
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `F x T` mask in (0, 1).
    pub mask: Var,
    /// Mask times the noisy magnitude.
    pub masked: Var,
    pub noisy: Var,
    pub params: Vec<Var>,
}

impl MaskEstimator {
    /// Validates the geometry and draws He-uniform weights from the config
    /// seed; biases start at zero.
    pub fn build(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = layout(&config)
            .into_iter()
            .map(|(name, shape, fan_in)| {
                let mut value = Tensor::zeros(&shape);
                if fan_in > 0 {
                    let bound = (6.0 / fan_in as f64).sqrt();
                    value.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
                    to_f32_grid(&mut value);
                }
                NamedParam { name, value }
            })
            .collect();
        Ok(Self { config, params })
    }

    /// A network that outputs `sigmoid(logit)` everywhere: all weights zero,
    /// output bias at `logit`.
    pub fn constant_mask(config: ModelConfig, logit: f64) -> Result<Self> {
        let mut m = Self::build(config)?;
        let bias = output_bias_name(&m.config);
        for p in &mut m.params {
            let v = if p.name == bias { logit } else { 0.0 };
            p.value.data_mut().fill(v);
        }
        Ok(m)
    }

    /// Zeroes the visual branch so it contributes nothing.
    pub fn with_zeroed_visual(mut self) -> Self {
        for p in &mut self.params {
            if p.name.starts_with("visual.") {
                p.value.data_mut().fill(0.0);
            }
        }
        self
    }

    pub fn from_parts(config: ModelConfig, params: Vec<NamedParam>) -> Result<Self> {
        config.validate()?;
        let expected = layout(&config);
        if expected.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                params.len()
            )));
        }
        for ((name, shape, _), p) in expected.iter().zip(&params) {
            if *name != p.name || shape.as_slice() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} {:?} does not match expected {name} {shape:?}",
                    p.name,
                    p.value.shape()
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[NamedParam] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [NamedParam] {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Pads a `F x T` magnitude and `T x D` visual matrix to the network's
    /// frequency size and a whole number of downsampled frames.
    pub fn prepare(&self, noisy_mag: &Array2<f64>, visual: &Array2<f64>) -> Result<PreparedInput> {
        let (bins, frames) = noisy_mag.dim();
        let f = self.config.audio.freq_bins;
        if bins > f || bins == 0 {
            return Err(Error::Shape(format!(
                "spectrogram has {bins} bins; the network takes at most {f}"
            )));
        }
        if frames == 0 {
            return Err(Error::Shape("spectrogram has no frames".into()));
        }
        let din = self.config.visual.input_dim;
        if visual.dim() != (frames, din) {
            return Err(Error::Shape(format!(
                "visual features are {:?}, expected ({frames}, {din})",
                visual.dim()
            )));
        }
        let m = self.config.time_multiple();
        let padded = frames.div_ceil(m) * m;
        let mut noisy = Tensor::zeros(&[1, f, padded]);
        for ((k, t), v) in noisy_mag.indexed_iter() {
            noisy.data_mut()[k * padded + t] = *v;
        }
        let mut vis = Tensor::zeros(&[din, 1, padded]);
        for ((t, d), v) in visual.indexed_iter() {
            vis.data_mut()[d * padded + t] = *v;
        }
        Ok(PreparedInput {
            noisy,
            visual: vis,
            bins,
            frames,
        })
    }

    /// Builds the mask (`F x T`, cropped back to the unpadded size) on `tape`
    /// from parameter handles in [`MaskEstimator::params`] order.
    pub fn graph(&self, tape: &mut Tape, params: &[Var], input: &PreparedInput) -> Result<Var> {
        if params.len() != self.params.len() {
            return Err(Error::Shape("parameter handle count mismatch".into()));
        }
        let cfg = &self.config;
        let d = cfg.audio.downsample_layers;
        let mut next = params.iter().copied();
        let mut take = || next.next().expect("layout fixes the parameter count");
        let conv = |tape: &mut Tape, x: Var, w: Var, b: Option<Var>, g: ConvGeometry, relu: bool| -> Result<Var> {
            let y = tape.conv2d(x, w, b, g)?;
            if relu {
                tape.relu(y)
            } else {
                Ok(y)
            }
        };
        let down = ConvGeometry::new(2, 1);
        let same = ConvGeometry::new(1, 1);
        let point = ConvGeometry::new(1, 0);

        let noisy = tape.constant(input.noisy.clone());
        let mut x = tape.ln1p(noisy)?;
        for _ in 0..d {
            let (w, b) = (take(), take());
            x = conv(tape, x, w, Some(b), down, true)?;
        }
        let mut skips = Vec::with_capacity(cfg.audio.conv_blocks);
        for _ in 0..cfg.audio.conv_blocks {
            for _ in 0..2 {
                let (w, b) = (take(), take());
                x = conv(tape, x, w, Some(b), same, true)?;
            }
            skips.push(x);
            x = tape.pool_freq(x, 2)?;
        }

        let s = 1usize << d;
        let temporal = if d == 0 {
            ConvGeometry::new(1, 0)
        } else {
            ConvGeometry {
                stride: (1, s),
                padding: (0, s / 2),
            }
        };
        let vis = tape.constant(input.visual.clone());
        let v = conv(tape, vis, take(), None, temporal, true)?;
        let v = conv(tape, v, take(), None, point, true)?;
        let v = conv(tape, v, take(), None, point, false)?;
        let v = tape.upsample(v, 1, cfg.bottleneck_bins())?;
        x = tape.concat(x, v, 0)?;

        for skip in skips.into_iter().rev() {
            x = tape.upsample(x, 1, 2)?;
            if cfg.skip_connections {
                x = tape.concat(x, skip, 0)?;
            }
            for _ in 0..2 {
                let (w, b) = (take(), take());
                x = conv(tape, x, w, Some(b), same, true)?;
            }
        }
        if d == 0 {
            let (w, b) = (take(), take());
            x = conv(tape, x, w, Some(b), point, false)?;
        }
        for i in 0..d {
            let (w, b) = (take(), take());
            x = tape.conv_transpose2d(x, w, Some(b), down)?;
            if i + 1 < d {
                x = tape.relu(x)?;
            }
        }
        let logits = tape.reshape(x, &[cfg.audio.freq_bins, input.noisy.shape()[2]])?;
        let logits = tape.narrow(logits, 0, 0, input.bins)?;
        let logits = tape.narrow(logits, 1, 0, input.frames)?;
        tape.sigmoid(logits)
    }

    /// Records a forward pass on `tape`. With `trainable` the parameters are
    /// gradient-carrying leaves.
    pub fn forward_on(
        &self,
        tape: &mut Tape,
        noisy_mag: &Array2<f64>,
        visual: &Array2<f64>,
        trainable: bool,
    ) -> Result<ForwardPass> {
        let input = self.prepare(noisy_mag, visual)?;
        let params: Vec<Var> = self
            .params
            .iter()
            .map(|p| tape.leaf(p.value.clone(), trainable))
            .collect();
        let mask = self.graph(tape, &params, &input)?;
        let noisy = tape.constant(Tensor::from_array2(noisy_mag));
        let masked = tape.mul(mask, noisy)?;
        Ok(ForwardPass {
            mask,
            masked,
            noisy,
            params,
        })
    }

    /// Mask for a noisy magnitude (`F x T`) and frame-aligned visual
    /// features (`T x D`).
    pub fn forward(&self, noisy_mag: &Array2<f64>, visual: &Array2<f64>) -> Result<Array2<f64>> {
        let mut tape = Tape::new();
        let pass = self.forward_on(&mut tape, noisy_mag, visual, false)?;
        tape.value(pass.mask).to_array2()
    }
}
