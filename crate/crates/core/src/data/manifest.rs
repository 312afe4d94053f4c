//! Line-delimited JSON dataset manifests.
//!
//! The first line is a header record with corpus-wide settings; every other
//! line describes one mixture. Paths are relative to the manifest's directory.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::StftConfig;
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidArgument(format!(
                "unknown split '{s}' (expected train, val or test)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub version: u32,
    pub sample_rate: u32,
    pub stft: StftConfig,
    pub visual_dim: usize,
    pub visual_fps: f64,
    pub corpus_seed: u64,
    /// True when no speaker appears in more than one split.
    pub speaker_independent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub utterance_id: String,
    pub split: Split,
    pub clean_path: String,
    /// The interferer after SNR scaling, as added to the mixture.
    pub interferer_path: String,
    pub mixture_path: String,
    pub visual_path: String,
    pub snr_db: i32,
    pub speaker_seed: u64,
    /// `None` for noise interferers.
    pub interferer_speaker_seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header(ManifestHeader),
    Entry(ManifestEntry),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths are resolved against.
    pub root: PathBuf,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen: HashMap<&str, Split> = HashMap::new();
        for e in &self.entries {
            if let Some(prev) = seen.insert(&e.utterance_id, e.split) {
                return Err(Error::Manifest(if prev == e.split {
                    format!("duplicate utterance id {}", e.utterance_id)
                } else {
                    format!("utterance {} appears in both {prev} and {}", e.utterance_id, e.split)
                }));
            }
            if !(0..=20).contains(&e.snr_db) {
                return Err(Error::Manifest(format!(
                    "utterance {}: SNR {} dB outside [0, 20]",
                    e.utterance_id, e.snr_db
                )));
            }
        }
        if self.header.speaker_independent {
            self.check_speaker_disjoint()?;
        }
        Ok(())
    }

    /// Fails if any speaker seed (target or interferer) is used by two splits.
    pub fn check_speaker_disjoint(&self) -> Result<()> {
        let mut owner: HashMap<u64, Split> = HashMap::new();
        for e in &self.entries {
            for s in std::iter::once(e.speaker_seed).chain(e.interferer_speaker_seed) {
                match owner.insert(s, e.split) {
                    Some(prev) if prev != e.split => {
                        return Err(Error::Manifest(format!(
                            "speaker {s} appears in both {prev} and {}",
                            e.split
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    pub fn speakers(&self, split: Split) -> HashSet<u64> {
        self.split(split).iter().map(|e| e.speaker_seed).collect()
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        let mut push = |r: &Record| -> Result<()> {
            out.push_str(&serde_json::to_string(r).map_err(|e| Error::Manifest(e.to_string()))?);
            out.push('\n');
            Ok(())
        };
        push(&Record::Header(self.header.clone()))?;
        for e in &self.entries {
            push(&Record::Entry(e.clone()))?;
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = self.to_jsonl()?;
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(text.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }

    /// Accepts the manifest file or the directory holding `manifest.jsonl`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut path = path.as_ref().to_path_buf();
        if path.is_dir() {
            path.push(MANIFEST_FILE);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, root)
    }

    pub fn parse(text: &str, root: PathBuf) -> Result<Self> {
        let mut header = None;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(line)
                .map_err(|e| Error::Manifest(format!("line {}: {e}", n + 1)))?;
            match (record, &header) {
                (Record::Header(h), None) if entries.is_empty() => header = Some(h),
                (Record::Header(_), _) => {
                    return Err(Error::Manifest(format!("line {}: unexpected header", n + 1)))
                }
                (Record::Entry(e), Some(_)) => entries.push(e),
                (Record::Entry(_), None) => {
                    return Err(Error::Manifest("entries precede the header".into()))
                }
            }
        }
        let header = header.ok_or_else(|| Error::Manifest("missing header record".into()))?;
        if header.version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported manifest version {}",
                header.version
            )));
        }
        let manifest = Self { header, entries, root };
        manifest.validate()?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, split: Split, speaker: u64, snr: i32) -> ManifestEntry {
        ManifestEntry {
            utterance_id: id.into(),
            split,
            clean_path: format!("clean/{id}.wav"),
            interferer_path: format!("interferer/{id}.wav"),
            mixture_path: format!("mixture/{id}.wav"),
            visual_path: format!("visual/{id}.feat"),
            snr_db: snr,
            speaker_seed: speaker,
            interferer_speaker_seed: Some(speaker + 1000),
        }
    }

    fn manifest(entries: Vec<ManifestEntry>) -> Manifest {
        Manifest {
            header: ManifestHeader {
                version: MANIFEST_VERSION,
                sample_rate: 16_000,
                stft: StftConfig::SPEECH_16K,
                visual_dim: 8,
                visual_fps: 25.0,
                corpus_seed: 1,
                speaker_independent: true,
            },
            entries,
            root: PathBuf::from("/data"),
        }
    }

    #[test]
    fn round_trip() {
        let m = manifest(vec![entry("a", Split::Train, 1, 3), entry("b", Split::Test, 2, 20)]);
        let text = m.to_jsonl().unwrap();
        assert!(text.lines().next().unwrap().contains(r#""record":"header""#));
        let back = Manifest::parse(&text, PathBuf::from("/data")).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.resolve("clean/a.wav"), PathBuf::from("/data/clean/a.wav"));
        assert_eq!(back.split(Split::Test).len(), 1);
    }

    #[test]
    fn rejects_bad_content() {
        let cross = manifest(vec![entry("a", Split::Train, 1, 3), entry("a", Split::Val, 2, 3)]);
        assert!(cross.validate().is_err());
        let snr = manifest(vec![entry("a", Split::Train, 1, 21)]);
        assert!(snr.validate().is_err());
        let speakers = manifest(vec![entry("a", Split::Train, 1, 3), entry("b", Split::Val, 1, 3)]);
        assert!(matches!(speakers.check_speaker_disjoint(), Err(Error::Manifest(_))));
        assert!(Manifest::parse("", PathBuf::new()).is_err());
        assert!(Manifest::parse("{not json", PathBuf::new()).is_err());
    }

    #[test]
    fn split_names() {
        for s in Split::ALL {
            assert_eq!(s.to_string().parse::<Split>().unwrap(), s);
        }
        assert!("dev".parse::<Split>().is_err());
    }
}
