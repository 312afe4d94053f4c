//! 16-bit PCM mono WAV files.

use std::path::Path;

use crate::dsp::{resample, Waveform};
use crate::error::{Error, Result};

const FULL_SCALE: f64 = 32768.0;

/// Outcome of [`save_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SaveReport {
    /// Samples outside [-1, 1] that were clipped.
    pub clipped: usize,
}

fn hound_error(path: &Path, err: hound::Error) -> Error {
    match err {
        // hound reports short reads as `Other`.
        hound::Error::IoError(e)
            if matches!(e.kind(), std::io::ErrorKind::UnexpectedEof | std::io::ErrorKind::Other) =>
        {
            Error::MalformedWav {
                path: path.into(),
                reason: format!("file ends early: {e}"),
            }
        }
        hound::Error::IoError(e) => Error::io(path, e),
        hound::Error::FormatError(reason) => Error::MalformedWav {
            path: path.into(),
            reason: reason.into(),
        },
        hound::Error::Unsupported | hound::Error::TooWide | hound::Error::InvalidSampleFormat => {
            Error::UnsupportedEncoding {
                path: path.into(),
                reason: err.to_string(),
            }
        }
        hound::Error::UnfinishedSample => Error::MalformedWav {
            path: path.into(),
            reason: "truncated sample data".into(),
        },
    }
}

/// Reads a mono 16-bit PCM file, scaling samples to [-1, 1).
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| hound_error(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedEncoding {
            path: path.into(),
            reason: format!("expected mono audio, found {} channels", spec.channels),
        });
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedEncoding {
            path: path.into(),
            reason: format!(
                "expected 16-bit PCM, found {}-bit {:?}",
                spec.bits_per_sample, spec.sample_format
            ),
        });
    }
    // The header parsed, so a read failure here means the data chunk is
    // shorter than declared.
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / FULL_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| match e {
            hound::Error::IoError(io) => Error::MalformedWav {
                path: path.into(),
                reason: format!("truncated sample data: {io}"),
            },
            other => hound_error(path, other),
        })?;
    Waveform::new(samples, spec.sample_rate)
}

/// Like [`load_wav`], but checks the rate against `expected`; a mismatch is
/// an error unless `allow_resample` is set.
pub fn load_wav_at(path: impl AsRef<Path>, expected: u32, allow_resample: bool) -> Result<Waveform> {
    let wav = load_wav(path)?;
    if wav.sample_rate() == expected {
        Ok(wav)
    } else if allow_resample {
        resample(&wav, expected)
    } else {
        Err(Error::SampleRateMismatch {
            expected,
            found: wav.sample_rate(),
        })
    }
}

/// Rounds a sample to the 16-bit grid, as [`save_wav`] does.
pub fn quantize_sample(x: f64) -> i16 {
    (x * FULL_SCALE).round().clamp(-FULL_SCALE, FULL_SCALE - 1.0) as i16
}

/// The waveform as it reads back after a save/load round trip.
pub fn quantized(wav: &Waveform) -> Waveform {
    let samples = wav
        .samples()
        .iter()
        .map(|&x| f64::from(quantize_sample(x)) / FULL_SCALE)
        .collect();
    Waveform::from_parts_unchecked(samples, wav.sample_rate())
}

pub fn save_wav(wav: &Waveform, path: impl AsRef<Path>) -> Result<SaveReport> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wav.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| hound_error(path, e))?;
    let mut report = SaveReport::default();
    for &x in wav.samples() {
        if x.abs() > 1.0 {
            report.clipped += 1;
        }
        writer
            .write_sample(quantize_sample(x))
            .map_err(|e| hound_error(path, e))?;
    }
    writer.finalize().map_err(|e| hound_error(path, e))?;
    Ok(report)
}
