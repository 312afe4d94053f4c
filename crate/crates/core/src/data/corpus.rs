//! Synthetic corpus generation.

use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{Manifest, ManifestEntry, ManifestHeader, Split, MANIFEST_FILE, MANIFEST_VERSION};
use super::mix::{mix_at_snr, LengthFit};
use super::seed::{derive_seed, hash_str, rng_for};
use super::synth::{synth_noise, synth_utterance, SynthVoiceSpec};
use super::visual::{synth_visual_features, write_features};
use super::wav::{quantized, save_wav};
use crate::dsp::{StftConfig, Waveform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub clean_utterances: usize,
    pub speakers: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            clean_utterances: 5,
            speakers: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfererKind {
    /// A second synthetic talker.
    #[default]
    Speech,
    /// Stationary coloured noise.
    Noise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub seed: u64,
    pub sample_rate: u32,
    pub mixtures_per_clean: usize,
    /// Inclusive integer range of SNRs in dB.
    pub snr_range_db: (i32, i32),
    pub duration_range_secs: (f64, f64),
    pub visual_dim: usize,
    pub visual_fps: f64,
    pub length_fit: LengthFit,
    pub interferer: InterfererKind,
    pub speaker_independent: bool,
    pub train: SplitConfig,
    pub val: SplitConfig,
    pub test: SplitConfig,
}

impl Default for CorpusConfig {
    /// The toy corpus: 25/5/5 clean utterances, two mixtures each.
    fn default() -> Self {
        Self {
            seed: 2024,
            sample_rate: 16_000,
            mixtures_per_clean: 2,
            snr_range_db: (0, 20),
            duration_range_secs: (1.0, 1.5),
            visual_dim: 32,
            visual_fps: 25.0,
            length_fit: LengthFit::Crop,
            interferer: InterfererKind::Speech,
            speaker_independent: true,
            train: SplitConfig {
                clean_utterances: 25,
                speakers: 6,
            },
            val: SplitConfig::default(),
            test: SplitConfig::default(),
        }
    }
}

impl CorpusConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn split_config(&self, split: Split) -> SplitConfig {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sample_rate != 16_000 {
            return bad(format!("sample rate must be 16000, got {}", self.sample_rate));
        }
        if self.mixtures_per_clean == 0 {
            return bad("mixtures_per_clean must be at least 1".into());
        }
        let (lo, hi) = self.snr_range_db;
        if lo < 0 || hi > 20 || lo > hi {
            return bad(format!("SNR range [{lo}, {hi}] must lie within [0, 20]"));
        }
        let (dlo, dhi) = self.duration_range_secs;
        // 30 spectrogram frames (the STOI segment) need just over 0.3 s.
        if !(dlo >= 0.35) || dlo > dhi || !dhi.is_finite() {
            return bad(format!("duration range [{dlo}, {dhi}] s must start at 0.35 s or more"));
        }
        if self.visual_dim == 0 || !(self.visual_fps > 0.0) {
            return bad("visual_dim and visual_fps must be positive".into());
        }
        let min_speakers = if self.interferer == InterfererKind::Speech { 2 } else { 1 };
        for split in Split::ALL {
            let sc = self.split_config(split);
            if sc.clean_utterances == 0 {
                return bad(format!("{split} split needs at least one clean utterance"));
            }
            if self.speaker_independent && sc.speakers < min_speakers {
                return bad(format!(
                    "{split} split has {} speakers; disjoint speech mixing needs at least {min_speakers}",
                    sc.speakers
                ));
            }
        }
        if !self.speaker_independent {
            let total: usize = Split::ALL.iter().map(|s| self.split_config(*s).speakers).sum();
            if total < min_speakers {
                return bad("speaker pool too small".into());
            }
        }
        Ok(())
    }

    fn speaker_pool(&self, split: Split) -> Vec<u64> {
        let pool = |s: Split| {
            let idx = Split::ALL.iter().position(|x| *x == s).expect("known split") as u64;
            (0..self.split_config(s).speakers as u64)
                .map(move |k| derive_seed(&[self.seed, 0x5BEA, idx, k]))
        };
        if self.speaker_independent {
            pool(split).collect()
        } else {
            Split::ALL.iter().flat_map(|s| pool(*s)).collect()
        }
    }
}

/// Result of [`make_dataset`].
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    /// Mixture samples clipped to full scale when written.
    pub clipped_samples: usize,
}

struct CleanJob {
    id: String,
    split: Split,
    index: usize,
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_wav(wav: &Waveform, root: &Path, rel: &str) -> Result<usize> {
    Ok(save_wav(wav, root.join(rel))?.clipped)
}

fn generate_clean(cfg: &CorpusConfig, job: &CleanJob, out: &Path) -> Result<(Vec<ManifestEntry>, usize)> {
    let mut rng = rng_for(&[cfg.seed, hash_str(&job.id)]);
    let pool = cfg.speaker_pool(job.split);
    let speaker = pool[job.index % pool.len()];
    let (dlo, dhi) = cfg.duration_range_secs;
    let draw_duration = |rng: &mut rand_chacha::ChaCha8Rng| {
        if dhi > dlo {
            rng.random_range(dlo..=dhi)
        } else {
            dlo
        }
    };
    let duration = draw_duration(&mut rng);
    let spec = SynthVoiceSpec::for_speaker(speaker, rng.random(), duration, cfg.sample_rate);
    let clean = quantized(&synth_utterance(&spec)?);
    let clean_rel = format!("clean/{}.wav", job.id);
    let visual_rel = format!("visual/{}.feat", job.id);
    let mut clipped = write_wav(&clean, out, &clean_rel)?;
    let track = synth_visual_features(&clean, cfg.visual_dim, cfg.visual_fps, cfg.seed, rng.random())?;
    write_features(&track, out.join(&visual_rel))?;

    let others: Vec<u64> = pool.iter().copied().filter(|s| *s != speaker).collect();
    let mut entries = Vec::with_capacity(cfg.mixtures_per_clean);
    for m in 0..cfg.mixtures_per_clean {
        let mix_id = format!("{}-{}", job.id, (b'a' + m as u8) as char);
        let (interferer, interferer_speaker) = match cfg.interferer {
            InterfererKind::Speech => {
                let who = *others.choose(&mut rng).expect("validated pool size");
                let spec = SynthVoiceSpec::for_speaker(who, rng.random(), draw_duration(&mut rng), cfg.sample_rate);
                (quantized(&synth_utterance(&spec)?), Some(who))
            }
            InterfererKind::Noise => (quantized(&synth_noise(rng.random(), duration, cfg.sample_rate)?), None),
        };
        let snr = rng.random_range(cfg.snr_range_db.0..=cfg.snr_range_db.1);
        let mix = mix_at_snr(&clean, &interferer, f64::from(snr), cfg.length_fit)?;
        let interferer_rel = format!("interferer/{mix_id}.wav");
        let mixture_rel = format!("mixture/{mix_id}.wav");
        clipped += write_wav(&mix.scaled_interferer, out, &interferer_rel)?;
        clipped += write_wav(&mix.mixture, out, &mixture_rel)?;
        entries.push(ManifestEntry {
            utterance_id: mix_id,
            split: job.split,
            clean_path: clean_rel.clone(),
            interferer_path: interferer_rel,
            mixture_path: mixture_rel,
            visual_path: visual_rel.clone(),
            snr_db: snr,
            speaker_seed: speaker,
            interferer_speaker_seed: interferer_speaker,
        });
    }
    Ok((entries, clipped))
}

/// Synthesises the corpus described by `cfg` under `out` and writes its
/// manifest. Every clean utterance draws from its own RNG stream, so the
/// output does not depend on scheduling.
pub fn make_dataset(cfg: &CorpusConfig, out: impl AsRef<Path>) -> Result<Dataset> {
    cfg.validate()?;
    let out = out.as_ref();
    for sub in ["", "clean", "interferer", "mixture", "visual"] {
        create_dir(&out.join(sub))?;
    }
    let jobs: Vec<CleanJob> = Split::ALL
        .iter()
        .flat_map(|&split| {
            (0..cfg.split_config(split).clean_utterances).map(move |index| CleanJob {
                id: format!("{split}-{index:04}"),
                split,
                index,
            })
        })
        .collect();
    let results: Vec<(Vec<ManifestEntry>, usize)> = jobs
        .par_iter()
        .map(|job| generate_clean(cfg, job, out).map_err(|e| e.for_utterance(&job.id)))
        .collect::<Result<_>>()?;

    let mut entries = Vec::new();
    let mut clipped = 0;
    for (e, c) in results {
        entries.extend(e);
        clipped += c;
    }
    let manifest = Manifest {
        header: ManifestHeader {
            version: MANIFEST_VERSION,
            sample_rate: cfg.sample_rate,
            stft: StftConfig::SPEECH_16K,
            visual_dim: cfg.visual_dim,
            visual_fps: cfg.visual_fps,
            corpus_seed: cfg.seed,
            speaker_independent: cfg.speaker_independent,
        },
        entries,
        root: out.to_path_buf(),
    };
    manifest.validate()?;
    let manifest_path = out.join(MANIFEST_FILE);
    manifest.save(&manifest_path)?;
    Ok(Dataset {
        manifest,
        manifest_path,
        clipped_samples: clipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::features::extract_features;
    use crate::data::visual::read_features;
    use crate::data::wav::load_wav;

    fn small() -> CorpusConfig {
        CorpusConfig {
            train: SplitConfig {
                clean_utterances: 10,
                speakers: 3,
            },
            val: SplitConfig {
                clean_utterances: 2,
                speakers: 2,
            },
            test: SplitConfig {
                clean_utterances: 2,
                speakers: 2,
            },
            duration_range_secs: (0.5, 0.7),
            visual_dim: 8,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn two_mixtures_per_clean_with_disjoint_speakers() {
        let dir = tempfile::tempdir().unwrap();
        let ds = make_dataset(&small(), dir.path()).unwrap();
        let m = &ds.manifest;
        assert_eq!(m.split(Split::Train).len(), 20);
        assert_eq!(m.split(Split::Val).len(), 4);
        m.check_speaker_disjoint().unwrap();
        for s in Split::ALL {
            for t in Split::ALL {
                if s != t {
                    assert!(m.speakers(s).is_disjoint(&m.speakers(t)));
                }
            }
        }
        for e in &m.entries {
            assert!((0..=20).contains(&e.snr_db));
            assert_ne!(Some(e.speaker_seed), e.interferer_speaker_seed);
            let mix = load_wav(m.resolve(&e.mixture_path)).unwrap();
            let clean = load_wav(m.resolve(&e.clean_path)).unwrap();
            load_wav(m.resolve(&e.interferer_path)).unwrap();
            assert_eq!(mix.len(), clean.len());
            assert!(extract_features(&mix).unwrap().bins.ncols() >= 30);
            let track = read_features(m.resolve(&e.visual_path), 25.0).unwrap();
            assert_eq!(track.dim(), 8);
        }
        assert_eq!(Manifest::load(dir.path()).unwrap(), ds.manifest);
    }

    #[test]
    fn reproducible_bytes() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let cfg = CorpusConfig {
            train: SplitConfig {
                clean_utterances: 3,
                speakers: 2,
            },
            ..small()
        };
        make_dataset(&cfg, a.path()).unwrap();
        make_dataset(&cfg, b.path()).unwrap();
        let read = |d: &Path, rel: &str| std::fs::read(d.join(rel)).unwrap();
        assert_eq!(read(a.path(), MANIFEST_FILE), read(b.path(), MANIFEST_FILE));
        assert_eq!(read(a.path(), "mixture/train-0001-b.wav"), read(b.path(), "mixture/train-0001-b.wav"));
    }

    #[test]
    fn config_validation() {
        assert!(CorpusConfig::default().validate().is_ok());
        let one_speaker = CorpusConfig {
            test: SplitConfig {
                clean_utterances: 2,
                speakers: 1,
            },
            ..CorpusConfig::default()
        };
        assert!(matches!(one_speaker.validate(), Err(Error::Config(_))));
        let noise = CorpusConfig {
            interferer: InterfererKind::Noise,
            ..one_speaker
        };
        assert!(noise.validate().is_ok());
        assert!(CorpusConfig::from_toml("seed = 3\nmixtures_per_clean = 0").is_err());
        assert!(CorpusConfig::from_toml("bogus = 1").is_err());
        let parsed = CorpusConfig::from_toml("seed = 9\n[train]\nclean_utterances = 4\nspeakers = 2\n").unwrap();
        assert_eq!((parsed.seed, parsed.train.clean_utterances), (9, 4));
    }

    #[test]
    fn unwritable_output_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("occupied");
        std::fs::write(&file, b"x").unwrap();
        assert!(matches!(make_dataset(&small(), file.join("sub")), Err(Error::Io { .. })));
    }
}
