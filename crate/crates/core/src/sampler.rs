//! Batched frame sampling for two-event clips.
//!
//! Clips in a batch share a frame count `T` but each has its own split point
//! `P[i]`, so their two segments differ in length. Both schemes here resample
//! every item's segments to lengths shared across the batch:
//!
//! * [`SamplingScheme::MaxLength`] stretches every left segment to the longest
//!   left segment in the batch and likewise for the right.
//! * [`SamplingScheme::AverageSplit`] samples `round(mean(P))` frames from both
//!   segments of every item.
//!
//! The left segment of item `i` is the closed range `[0, P[i]]` and the right
//! segment is `[P[i], T - 1]`; the boundary frame belongs to both.

use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingScheme {
    #[default]
    MaxLength,
    AverageSplit,
}

/// A batch of two-event clips sharing `total_frames`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRequest {
    total_frames: usize,
    split_points: Vec<usize>,
}

impl SampleRequest {
    pub fn new(total_frames: usize, split_points: Vec<usize>) -> Result<Self> {
        if split_points.is_empty() {
            return Err(Error::Empty("sample batch"));
        }
        if let Some(&bad) = split_points.iter().find(|&&p| p == 0 || p >= total_frames) {
            return Err(Error::InvalidBoundary {
                boundary: bad,
                frames: total_frames,
            });
        }
        Ok(Self {
            total_frames,
            split_points,
        })
    }

    pub fn total_frames(&self) -> usize {
        self.total_frames
    }

    pub fn split_points(&self) -> &[usize] {
        &self.split_points
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemPlan {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplePlan {
    pub left_len: usize,
    pub right_len: usize,
    pub items: Vec<ItemPlan>,
}

/// `count` indices spread over `[start, end]` at bin midpoints:
/// `start + floor((k + 1/2) * L / count)` with `L = end - start + 1`.
pub fn uniform_sampling(start: usize, end: usize, count: usize) -> Result<Vec<usize>> {
    if start > end || count == 0 {
        return Err(Error::InvalidSampleRange { start, end, count });
    }
    let span = end - start + 1;
    Ok((0..count)
        .map(|k| (start + (2 * k + 1) * span / (2 * count)).min(end))
        .collect())
}

pub fn sample(request: &SampleRequest, scheme: SamplingScheme) -> Result<SamplePlan> {
    match scheme {
        SamplingScheme::MaxLength => sample_max_length(request),
        SamplingScheme::AverageSplit => sample_average_split(request),
    }
}

pub fn sample_max_length(request: &SampleRequest) -> Result<SamplePlan> {
    let t = request.total_frames;
    let points = &request.split_points;
    let left_len = points.iter().map(|&p| p + 1).max().unwrap_or(0);
    let right_len = points.iter().map(|&p| t - p).max().unwrap_or(0);
    build_plan(request, left_len, right_len)
}

pub fn sample_average_split(request: &SampleRequest) -> Result<SamplePlan> {
    let points = &request.split_points;
    let mean = points.iter().sum::<usize>() as f64 / points.len() as f64;
    let frames = libm::round(mean) as usize;
    if frames == 0 {
        return Err(Error::DegenerateAverage);
    }
    build_plan(request, frames, frames)
}

fn build_plan(request: &SampleRequest, left_len: usize, right_len: usize) -> Result<SamplePlan> {
    let last = request.total_frames - 1;
    let items = request
        .split_points
        .iter()
        .map(|&p| {
            Ok(ItemPlan {
                left: uniform_sampling(0, p, left_len)?,
                right: uniform_sampling(p, last, right_len)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SamplePlan {
        left_len,
        right_len,
        items,
    })
}
