//! Corpus plumbing: audio files, synthetic talkers, mixing, features,
//! visual tracks and manifests.

mod corpus;
mod features;
mod manifest;
mod mix;
mod seed;
mod synth;
mod visual;
mod wav;

pub use corpus::{make_dataset, CorpusConfig, Dataset, InterfererKind, SplitConfig};
pub use features::{extract_features, FEATURE_SAMPLE_RATE};
pub use manifest::{Manifest, ManifestEntry, ManifestHeader, Split, MANIFEST_FILE, MANIFEST_VERSION};
pub use mix::{fit_length, mix_at_snr, snr_db, LengthFit, Mixture};
pub use seed::{derive_seed, hash_str};
pub use synth::{synth_noise, synth_utterance, SynthVoiceSpec};
pub use visual::{
    read_features, synth_visual_features, video_frames, write_features, VisualFeatureTrack, DEFAULT_FPS,
};
pub use wav::{load_wav, load_wav_at, quantize_sample, quantized, save_wav, SaveReport};
