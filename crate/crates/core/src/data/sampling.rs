//! Frame subsampling and training-pair construction.

use rand::seq::index::{sample, sample_weighted};
use rand::Rng;

use super::VideoRecord;
use crate::encoder::FrameFeatures;
use crate::error::{Error, Result};

/// Added to every frame weight so no frame has zero probability.
pub const WEIGHT_EPS: f64 = 1e-6;

/// `n` ascending frame indices drawn uniformly; without replacement when the
/// video is long enough, with replacement otherwise.
pub fn subsample_uniform<R: Rng + ?Sized>(len: usize, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if len == 0 {
        return Err(Error::Degenerate("cannot subsample an empty video".into()));
    }
    if n == 0 {
        return Err(Error::Config("subsample size must be positive".into()));
    }
    let mut idx = if len >= n {
        sample(rng, len, n).into_vec()
    } else {
        (0..n).map(|_| rng.random_range(0..len)).collect()
    };
    idx.sort_unstable();
    Ok(idx)
}

/// Per-frame sampling weight: mean region confidence plus [`WEIGHT_EPS`].
pub fn frame_weight(f: &FrameFeatures) -> f64 {
    f.mean_confidence() + WEIGHT_EPS
}

/// `n` ascending frame indices drawn proportionally to [`frame_weight`].
///
/// Draws are without replacement when the video has at least `n` frames;
/// shorter videos are sampled with replacement. Frames with no detections
/// all carry the same weight, so an undetected video is sampled uniformly.
pub fn subsample_weighted<R: Rng + ?Sized>(
    frames: &[FrameFeatures],
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let len = frames.len();
    if len == 0 {
        return Err(Error::Degenerate("cannot subsample an empty video".into()));
    }
    if n == 0 {
        return Err(Error::Config("subsample size must be positive".into()));
    }
    let weights: Vec<f64> = frames.iter().map(frame_weight).collect();
    let mut idx = if len >= n {
        sample_weighted(rng, len, |i| weights[i], n)
            .map_err(|e| Error::Numeric(format!("weighted sampling failed: {e}")))?
            .into_vec()
    } else {
        let total: f64 = weights.iter().sum();
        (0..n)
            .map(|_| {
                let mut u = rng.random_range(0.0..total);
                for (i, w) in weights.iter().enumerate() {
                    if u < *w {
                        return i;
                    }
                    u -= w;
                }
                len - 1
            })
            .collect()
    };
    idx.sort_unstable();
    Ok(idx)
}

/// Two distinct videos and the frames drawn from each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSample {
    /// Indices into the video list the pair was drawn from.
    pub a: usize,
    pub b: usize,
    pub a_frames: Vec<usize>,
    pub b_frames: Vec<usize>,
}

/// Draws an ordered pair of distinct videos uniformly (any view combination)
/// and subsamples `frames_per_seq` confidence-weighted frames from each.
pub fn make_pair<R: Rng + ?Sized>(
    videos: &[&VideoRecord],
    frames_per_seq: usize,
    rng: &mut R,
) -> Result<PairSample> {
    if videos.len() < 2 {
        return Err(Error::Config(format!(
            "pair sampling needs at least 2 videos, got {}",
            videos.len()
        )));
    }
    let (a, b) = distinct_pair(videos.len(), rng);
    Ok(PairSample {
        a,
        b,
        a_frames: subsample_weighted(&videos[a].frames, frames_per_seq, rng)?,
        b_frames: subsample_weighted(&videos[b].frames, frames_per_seq, rng)?,
    })
}

pub(crate) fn distinct_pair<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (usize, usize) {
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}
