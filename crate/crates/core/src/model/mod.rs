//! The audio-visual mask estimator, its oracle counterpart and training.

mod checkpoint;
mod config;
mod enhance;
mod irm;
mod network;
mod optim;
mod train;
mod visual;

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{AudioConfig, DecoderConfig, ModelConfig, VisualConfig};
pub use enhance::{apply_mask, enhance, estimate};
pub use irm::{ideal_ratio_mask, IRM_EPS};
pub use network::{ForwardPass, MaskEstimator, NamedParam, PreparedInput, SATURATED_LOGIT};
pub use optim::{Adam, AdamConfig};
pub use train::{
    mean_modified_stoi, noisy_baseline_loss, noisy_baseline_stoi, stft_for_bins, EpochRecord, Example, Mode, TrainConfig,
    Trainer,
};
pub use visual::upsample_visual;
