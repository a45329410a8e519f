//! Finite-difference verification of the hand-written pipeline gradients.
//!
//! The loss is the toy-head cross entropy of `Z_v`. Checked parameters are every
//! entry of the head projection and every entry of the query tokens; attention
//! projections and the encoder stay frozen.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::head::{head_loss, ToyHead};
use crate::memory::Capacity;
use crate::qformer::{HemModel, ModelConfig};
use crate::segmentation::{EventPartition, FrameSequence, Video};
use crate::tensor::Matrix;

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Relative errors are taken against `max(|analytic|, |numeric|, FLOOR)`.
///
/// Central differences at `eps = 1e-5` carry roughly `1e-11` of rounding noise
/// on an O(1) loss, so entries below this magnitude are compared absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    pub tolerance: f64,
    /// Scales the analytic gradient by `1 + corrupt` before comparing. Negative control.
    pub corrupt: Option<f64>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            tolerance: DEFAULT_TOLERANCE,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parameter {
    Projection,
    Queries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub tolerance: f64,
    pub loss: f64,
    pub checked: usize,
    pub max_relative_error: f64,
    pub worst: (Parameter, usize),
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Central differences of `f` at `point`, one coordinate at a time.
pub fn central_differences(mut f: impl FnMut(&[f64]) -> Result<f64>, point: &[f64], eps: f64) -> Result<Vec<f64>> {
    let mut x = point.to_vec();
    let mut grads = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        x[i] = point[i] + eps;
        let plus = f(&x)?;
        x[i] = point[i] - eps;
        let minus = f(&x)?;
        x[i] = point[i];
        grads.push((plus - minus) / (2.0 * eps));
    }
    Ok(grads)
}

/// Loss plus analytic gradients for the projection and the query tokens.
pub fn pipeline_loss_and_gradients(
    model: &HemModel,
    head: &ToyHead,
    video: &Video,
    partition: &EventPartition,
    capacity: Capacity,
) -> Result<(f64, Matrix, Matrix)> {
    let (out, trace) = model.run_traced(video, partition.clone(), capacity)?;
    let loss = head_loss(&out.z_v, head)?;
    let d_queries = model.backward_queries(&trace, &loss.d_input)?;
    Ok((loss.loss, loss.d_projection, d_queries))
}

fn pipeline_loss(
    model: &HemModel,
    head: &ToyHead,
    video: &Video,
    partition: &EventPartition,
    capacity: Capacity,
) -> Result<f64> {
    let out = model.run_partition(video, partition.clone(), capacity)?;
    Ok(head_loss(&out.z_v, head)?.loss)
}

pub fn check_pipeline(
    model: &HemModel,
    head: &ToyHead,
    video: &Video,
    partition: &EventPartition,
    capacity: Capacity,
    options: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let (loss, mut d_proj, mut d_queries) = pipeline_loss_and_gradients(model, head, video, partition, capacity)?;
    if let Some(c) = options.corrupt {
        d_proj = d_proj.scale(1.0 + c);
        d_queries = d_queries.scale(1.0 + c);
    }

    let proj = head.projection.clone();
    let numeric_proj = central_differences(
        |x| {
            let probe = ToyHead::new(Matrix::new(proj.rows(), proj.cols(), x.to_vec())?, head.target)?;
            pipeline_loss(model, &probe, video, partition, capacity)
        },
        proj.as_slice(),
        options.epsilon,
    )?;

    let queries = model.queries().clone();
    let mut probe_model = model.clone();
    let numeric_queries = central_differences(
        |x| {
            probe_model.set_queries(Matrix::new(queries.rows(), queries.cols(), x.to_vec())?)?;
            pipeline_loss(&probe_model, head, video, partition, capacity)
        },
        queries.as_slice(),
        options.epsilon,
    )?;

    let mut worst = (Parameter::Projection, 0);
    let mut max_rel = 0.0f64;
    for (param, analytic, numeric) in [
        (Parameter::Projection, d_proj.as_slice(), &numeric_proj[..]),
        (Parameter::Queries, d_queries.as_slice(), &numeric_queries[..]),
    ] {
        for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
            let rel = relative_error(a, n);
            if rel > max_rel || rel.is_nan() {
                max_rel = rel;
                worst = (param, i);
            }
        }
    }
    Ok(GradCheckReport {
        epsilon: options.epsilon,
        tolerance: options.tolerance,
        loss,
        checked: numeric_proj.len() + numeric_queries.len(),
        max_relative_error: max_rel,
        worst,
        passed: max_rel < options.tolerance,
    })
}

/// A clip of `events` constant-colour blocks of `frames_per_event` frames each,
/// with small seeded per-pixel jitter so frames within a block differ.
pub fn block_video(
    events: usize,
    frames_per_event: usize,
    height: usize,
    width: usize,
    seed: u64,
) -> Result<FrameSequence> {
    if events == 0 || frames_per_event == 0 {
        return Err(Error::Empty("block video"));
    }
    const PALETTE: [[f64; 3]; 6] = [
        [0.85, 0.15, 0.10],
        [0.10, 0.80, 0.20],
        [0.15, 0.20, 0.85],
        [0.80, 0.80, 0.10],
        [0.10, 0.75, 0.80],
        [0.75, 0.10, 0.80],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plane = height * width;
    let frames: Vec<Vec<f64>> = (0..events * frames_per_event)
        .map(|t| {
            let colour = PALETTE[(t / frames_per_event) % PALETTE.len()];
            (0..3 * plane)
                .map(|i| (colour[i / plane] + rng.gen_range(-0.03..0.03)).clamp(0.0, 1.0))
                .collect()
        })
        .collect();
    FrameSequence::from_frames(height, width, &frames)
}

/// The small fixed instance used by the `gradcheck` command: two events of three
/// frames, capacity 2 so the first event's bank is merge-compressed.
pub fn toy_instance(config: ModelConfig) -> Result<(HemModel, ToyHead, Video, EventPartition, Capacity)> {
    let model = HemModel::new(config)?;
    let side = config.tokens_per_frame.max(1) * 2;
    let frames = block_video(2, 3, side, side, config.seed)?;
    let video = Video::Frames(frames);
    let partition = crate::segmentation::segment(&video, Default::default(), 2)?;
    let head = model.head(2, 1 % config.classes)?;
    Ok((model, head, video, partition, Capacity::Blocks(2)))
}
