use std::ops::Range;

use hem_core::sampler::SamplePlan;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRange {
    pub start: usize,
    pub end: usize,
}

impl From<Range<usize>> for EventRange {
    fn from(r: Range<usize>) -> Self {
        Self {
            start: r.start,
            end: r.end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub frames: usize,
    pub num_events: usize,
    pub source: String,
    pub scores: Vec<f64>,
    pub split_points: Vec<usize>,
    pub event_ranges: Vec<EventRange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanItem {
    pub split_point: usize,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub scheme: u8,
    pub total_frames: usize,
    pub left_len: usize,
    pub right_len: usize,
    pub items: Vec<PlanItem>,
}

impl SampleReport {
    pub fn new(scheme: u8, total_frames: usize, points: &[usize], plan: SamplePlan) -> Self {
        Self {
            scheme,
            total_frames,
            left_len: plan.left_len,
            right_len: plan.right_len,
            items: plan
                .items
                .into_iter()
                .zip(points)
                .map(|(item, &p)| PlanItem {
                    split_point: p,
                    left: item.left,
                    right: item.right,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub input: String,
    pub frames: usize,
    pub num_events: usize,
    pub source: String,
    pub global_memory_cap: String,
    pub seed: u64,
    pub split_points: Vec<usize>,
    pub event_ranges: Vec<EventRange>,
    pub event_frame_counts: Vec<usize>,
    /// Global memory block count after each event.
    pub global_memory_sizes: Vec<usize>,
    pub z_v_path: String,
    pub z_v_dims: Vec<usize>,
    /// SHA-256 of the Z_v HEMT file.
    pub z_v_checksum: String,
    pub target: Option<usize>,
    pub loss: Option<f64>,
    /// Two-event batch plan for this clip alone, present when `num_events == 2`.
    pub sample_plan: Option<SampleReport>,
    pub wall_time_ms: f64,
}

impl RunReport {
    pub fn summary_line(&self) -> String {
        let loss = self.loss.map_or_else(|| "-".to_string(), |l| format!("{l:.6}"));
        format!(
            "frames={} events={} splits={:?} gm={:?} z_v={}x{} sha256={} loss={} time={:.1}ms",
            self.frames,
            self.num_events,
            self.split_points,
            self.global_memory_sizes,
            self.z_v_dims[0],
            self.z_v_dims[1],
            &self.z_v_checksum[..16],
            loss,
            self.wall_time_ms,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub epsilon: f64,
    pub tolerance: f64,
    pub loss: f64,
    pub checked: usize,
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub worst_index: usize,
    pub passed: bool,
}
