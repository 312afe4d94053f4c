//! Network hyper-parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioConfig {
    /// Frequency rows seen by the network; shorter spectrograms are
    /// zero-padded up to this.
    pub freq_bins: usize,
    /// Stride-2 convolutions applied before the convolution blocks.
    pub downsample_layers: usize,
    /// Channels of the first block; each later block doubles them.
    pub base_channels: usize,
    pub conv_blocks: usize,
}

impl Default for AudioConfig {
    fn default() -> Self {
        Self {
            freq_bins: 288,
            downsample_layers: 2,
            base_channels: 8,
            conv_blocks: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisualConfig {
    /// Width of each per-frame input feature vector.
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
}

impl Default for VisualConfig {
    fn default() -> Self {
        Self {
            input_dim: 32,
            hidden_dim: 32,
            output_dim: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    pub up_blocks: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self { up_blocks: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub audio: AudioConfig,
    pub visual: VisualConfig,
    pub decoder: DecoderConfig,
    pub skip_connections: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            audio: AudioConfig::default(),
            visual: VisualConfig::default(),
            decoder: DecoderConfig::default(),
            skip_connections: true,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Spectrogram rows must be a multiple of this.
    pub fn freq_multiple(&self) -> usize {
        1 << (self.audio.downsample_layers + self.audio.conv_blocks)
    }

    /// Frame counts are padded to a multiple of this.
    pub fn time_multiple(&self) -> usize {
        1 << self.audio.downsample_layers
    }

    /// Channels produced by encoder block `b`.
    pub fn block_channels(&self, b: usize) -> usize {
        self.audio.base_channels << b
    }

    /// Frequency rows at the bottleneck.
    pub fn bottleneck_bins(&self) -> usize {
        self.audio.freq_bins / self.freq_multiple()
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.audio;
        if a.base_channels == 0 || a.conv_blocks == 0 || a.freq_bins == 0 {
            return Err(Error::Config(
                "channels, conv blocks and frequency bins must be positive".into(),
            ));
        }
        if a.downsample_layers > 6 || a.conv_blocks > 6 {
            return Err(Error::Config("network depth above 6 is not supported".into()));
        }
        if self.decoder.up_blocks != a.conv_blocks {
            return Err(Error::Config(format!(
                "decoder has {} up-blocks but the encoder has {} conv blocks; the output would not match the input size",
                self.decoder.up_blocks, a.conv_blocks
            )));
        }
        if !a.freq_bins.is_multiple_of(self.freq_multiple()) {
            return Err(Error::Config(format!(
                "{} frequency bins are not divisible by 2^{} ({} stride-2 layers and {} pooling layers)",
                a.freq_bins,
                a.downsample_layers + a.conv_blocks,
                a.downsample_layers,
                a.conv_blocks
            )));
        }
        let v = &self.visual;
        if v.input_dim == 0 || v.hidden_dim == 0 || v.output_dim == 0 {
            return Err(Error::Config("visual dimensions must be positive".into()));
        }
        Ok(())
    }
}
