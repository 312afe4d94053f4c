//! Alignment of video-rate features to STFT frames.

use ndarray::Array2;

use crate::data::VisualFeatureTrack;
use crate::error::{Error, Result};

/// Nearest-neighbour upsampling of a visual track to `audio_frames` frames
/// spaced `hop_secs` apart. Audio frames past the end of the video reuse the
/// last visual frame.
pub fn upsample_visual(
    track: &VisualFeatureTrack,
    audio_frames: usize,
    hop_secs: f64,
) -> Result<Array2<f64>> {
    let n = track.num_frames();
    if n == 0 || track.dim() == 0 {
        return Err(Error::InvalidArgument("visual track is empty".into()));
    }
    if audio_frames == 0 {
        return Err(Error::InvalidArgument("need at least one audio frame".into()));
    }
    if !(hop_secs > 0.0) {
        return Err(Error::InvalidArgument("audio hop must be positive".into()));
    }
    let mut out = Array2::zeros((audio_frames, track.dim()));
    for (t, mut row) in out.rows_mut().into_iter().enumerate() {
        let idx = ((t as f64 * hop_secs * track.frame_rate) + 1e-9).floor() as usize;
        row.assign(&track.features.row(idx.min(n - 1)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(frames: usize) -> VisualFeatureTrack {
        let f = Array2::from_shape_fn((frames, 2), |(i, j)| (i * 2 + j) as f64);
        VisualFeatureTrack::new(f, 25.0).unwrap()
    }

    #[test]
    fn each_frame_repeats_four_times() {
        let up = upsample_visual(&track(25), 100, 0.01).unwrap();
        for t in 0..100 {
            assert_eq!(up[[t, 0]], ((t / 4) * 2) as f64);
        }
    }

    #[test]
    fn trailing_frames_clamp_to_last() {
        let up = upsample_visual(&track(25), 103, 0.01).unwrap();
        let last = (0..103).filter(|&t| up[[t, 0]] == 48.0).count();
        assert_eq!(last, 7);
    }

    #[test]
    fn single_frame_is_constant() {
        let up = upsample_visual(&track(1), 9, 0.01).unwrap();
        assert!(up.column(0).iter().all(|v| *v == 0.0));
        assert!(up.column(1).iter().all(|v| *v == 1.0));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(upsample_visual(&track(3), 0, 0.01).is_err());
        assert!(upsample_visual(&track(3), 4, 0.0).is_err());
    }
}
