//! Adaptive event segmentation.
//!
//! Each frame is reduced to a small pooled vector, adjacent pooled vectors are
//! compared with cosine similarity, and the `K - 1` least similar transitions
//! become event boundaries. A minimum score at gap `i` (between frames `i` and
//! `i + 1`) yields boundary `i + 1`, and events are the half-open ranges
//! `[0, b1), [b1, b2), ..., [b_{K-1}, T)`.

use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::tensor::{cosine, Matrix};

/// Which per-frame representation feeds the boundary scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimilaritySource {
    /// Spatial mean of each RGB channel of the raw frame.
    #[default]
    RawAvgpool,
    /// Mean over the token axis of precomputed `d x p` frame features.
    FeatureAvgpool,
    /// First token column of precomputed frame features.
    FeatureCls,
}

impl SimilaritySource {
    pub fn name(self) -> &'static str {
        match self {
            SimilaritySource::RawAvgpool => "raw_avgpool",
            SimilaritySource::FeatureAvgpool => "feature_avgpool",
            SimilaritySource::FeatureCls => "feature_cls",
        }
    }
}

/// A clip of RGB frames stored channel-major as `3 x T x H x W`, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FrameSequence {
    pub const CHANNELS: usize = 3;

    pub fn new(frames: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 {
            return Err(Error::Empty("frame sequence"));
        }
        let expected = Self::CHANNELS * frames * height * width;
        if data.len() != expected {
            return Err(Error::DataLength {
                rows: Self::CHANNELS * frames,
                cols: height * width,
                len: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if let Some(index) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::FrameValue {
                index,
                value: data[index],
            });
        }
        Ok(Self {
            frames,
            height,
            width,
            data,
        })
    }

    /// Builds a clip from per-frame `3 x H x W` buffers.
    pub fn from_frames(height: usize, width: usize, frames: &[Vec<f64>]) -> Result<Self> {
        let plane = height * width;
        let mut data = alloc::vec![0.0; Self::CHANNELS * frames.len() * plane];
        for (t, frame) in frames.iter().enumerate() {
            if frame.len() != Self::CHANNELS * plane {
                return Err(Error::LengthMismatch {
                    left: Self::CHANNELS * plane,
                    right: frame.len(),
                });
            }
            for c in 0..Self::CHANNELS {
                let dst = (c * frames.len() + t) * plane;
                data[dst..dst + plane].copy_from_slice(&frame[c * plane..(c + 1) * plane]);
            }
        }
        Self::new(frames.len(), height, width, data)
    }

    pub fn len(&self) -> usize {
        self.frames
    }

    pub fn is_empty(&self) -> bool {
        self.frames == 0
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Raw channel-major buffer.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// The `H x W` plane of channel `c` at frame `t`.
    pub fn plane(&self, c: usize, t: usize) -> &[f64] {
        let plane = self.height * self.width;
        let start = (c * self.frames + t) * plane;
        &self.data[start..start + plane]
    }

    /// Frame `t` as a `3 x H x W` buffer.
    pub fn frame(&self, t: usize) -> Vec<f64> {
        (0..Self::CHANNELS)
            .flat_map(|c| self.plane(c, t).iter().copied())
            .collect()
    }
}

/// Precomputed per-frame token features, each `d x p`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    frames: Vec<Matrix>,
}

impl FeatureSequence {
    pub fn new(frames: Vec<Matrix>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::Empty("feature sequence"));
        };
        let shape = first.shape();
        if shape.0 == 0 || shape.1 == 0 {
            return Err(Error::Empty("frame features"));
        }
        if let Some(bad) = frames.iter().find(|m| m.shape() != shape) {
            return Err(Error::ShapeMismatch {
                op: "feature sequence",
                left_rows: shape.0,
                left_cols: shape.1,
                right_rows: bad.rows(),
                right_cols: bad.cols(),
            });
        }
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.frames[0].rows()
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.frames[0].cols()
    }

    pub fn frame(&self, t: usize) -> &Matrix {
        &self.frames[t]
    }

    pub fn frames(&self) -> &[Matrix] {
        &self.frames
    }
}

/// Pipeline input: raw frames or precomputed features.
#[derive(Debug, Clone, PartialEq)]
pub enum Video {
    Frames(FrameSequence),
    Features(FeatureSequence),
}

impl Video {
    pub fn len(&self) -> usize {
        match self {
            Video::Frames(f) => f.len(),
            Video::Features(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One pooled vector per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledSequence {
    pub vectors: Vec<Vec<f64>>,
}

/// `scores[i]` compares frames `i` and `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSequence {
    pub scores: Vec<f64>,
}

/// `K` contiguous half-open frame ranges covering `[0, T)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventPartition {
    frames: usize,
    split_points: Vec<usize>,
}

impl EventPartition {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn split_points(&self) -> &[usize] {
        &self.split_points
    }

    pub fn num_events(&self) -> usize {
        self.split_points.len() + 1
    }

    pub fn ranges(&self) -> Vec<Range<usize>> {
        let mut starts = Vec::with_capacity(self.num_events());
        starts.push(0);
        starts.extend_from_slice(&self.split_points);
        let mut ends = self.split_points.clone();
        ends.push(self.frames);
        starts.into_iter().zip(ends).map(|(s, e)| s..e).collect()
    }
}

pub fn pool_frames(video: &Video, source: SimilaritySource) -> Result<PooledSequence> {
    let vectors = match (video, source) {
        (Video::Frames(frames), SimilaritySource::RawAvgpool) => (0..frames.len())
            .map(|t| (0..FrameSequence::CHANNELS).map(|c| mean(frames.plane(c, t))).collect())
            .collect(),
        (Video::Features(features), SimilaritySource::FeatureAvgpool) => features
            .frames()
            .iter()
            .map(|m| (0..m.rows()).map(|r| mean(m.row(r))).collect())
            .collect(),
        (Video::Features(features), SimilaritySource::FeatureCls) => {
            features.frames().iter().map(|m| m.column(0)).collect()
        }
        (Video::Frames(_), s) => return Err(Error::MissingFeatures(s.name())),
        (Video::Features(_), s) => return Err(Error::MissingFrames(s.name())),
    };
    Ok(PooledSequence { vectors })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn adjacent_scores(pooled: &PooledSequence) -> Result<ScoreSequence> {
    let n = pooled.vectors.len();
    if n < 2 {
        return Err(Error::TooFewFrames(n));
    }
    let scores = pooled
        .vectors
        .windows(2)
        .map(|w| cosine(&w[0], &w[1]))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreSequence { scores })
}

/// Boundaries at the `k - 1` smallest scores, ties going to the earlier gap.
pub fn select_split_points(scores: &ScoreSequence, k: usize) -> Result<Vec<usize>> {
    let gaps = scores.scores.len();
    if k == 0 || k - 1 > gaps {
        return Err(Error::TooManyEvents {
            frames: gaps + 1,
            events: k,
        });
    }
    let mut order: Vec<usize> = (0..gaps).collect();
    // Stable sort keeps index order among equal scores.
    order.sort_by(|&a, &b| scores.scores[a].total_cmp(&scores.scores[b]));
    let mut boundaries: Vec<usize> = order.into_iter().take(k - 1).map(|i| i + 1).collect();
    boundaries.sort_unstable();
    Ok(boundaries)
}

pub fn partition(frames: usize, boundaries: &[usize]) -> Result<EventPartition> {
    let mut prev = 0;
    for &b in boundaries {
        if b <= prev || b >= frames {
            return Err(Error::InvalidBoundary { boundary: b, frames });
        }
        prev = b;
    }
    Ok(EventPartition {
        frames,
        split_points: boundaries.to_vec(),
    })
}

/// Full segmentation: pool, score, pick boundaries, partition.
pub fn segment(video: &Video, source: SimilaritySource, k: usize) -> Result<EventPartition> {
    let t = video.len();
    if k == 0 || k > t {
        return Err(Error::TooManyEvents { frames: t, events: k });
    }
    if k == 1 {
        return partition(t, &[]);
    }
    let pooled = pool_frames(video, source)?;
    let scores = adjacent_scores(&pooled)?;
    let boundaries = select_split_points(&scores, k)?;
    partition(t, &boundaries)
}
