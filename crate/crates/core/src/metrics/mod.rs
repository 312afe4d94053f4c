//! Intrusive objective metrics.

mod sisdr;
mod stats;
mod stoi;

pub use sisdr::{si_sdr, SI_SDR_CAP_DB};
pub use stats::pearson;
pub use stoi::{
    modified_stoi, modified_stoi_with, score_envelopes, stoi, stoi_with, MetricScore, StoiConfig,
    StoiVariant, CLASSICAL_FFT_SIZE, CLASSICAL_FRAME_LEN, CLASSICAL_SAMPLE_RATE,
};
pub(crate) use stoi::DEGENERATE_REL;
