#![no_std]

//! Event-segmented hierarchical memory front-end for long frame sequences.
//!
//! The crate is split along the stages a clip goes through:
//!
//! * [`segmentation`] pools frames, scores adjacent pairs by cosine similarity and
//!   cuts the clip into `K` events at the least similar transitions.
//! * [`sampler`] builds fixed-shape frame index plans so that two-event clips with
//!   different split points can be batched together.
//! * [`memory`] holds the per-event local memory, the per-event query bank and the
//!   capacity-bounded global memory with adjacent-block merge compression.
//! * [`qformer`] runs the query-token attention block over every event and
//!   assembles the video-level token matrix, with a toy linear classifier head and
//!   hand-written backward pass so gradients can be checked numerically.
//!
//! Everything here is allocation-only (`alloc`), deterministic given a seed and
//! free of IO; file formats and the command line live in the `hem` crate.

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod attention;
pub mod encoder;
mod error;
pub mod gradcheck;
pub mod head;
pub mod memory;
pub mod qformer;
mod rng;
pub mod sampler;
pub mod segmentation;
pub mod tensor;

pub use crate::error::{Error, Result};
pub use crate::memory::{Capacity, GlobalMemory, LocalMemory, QueryBank};
pub use crate::qformer::{EventOutput, HemModel, ModelConfig, PipelineConfig, PipelineOutput};
pub use crate::sampler::{SamplePlan, SampleRequest, SamplingScheme};
pub use crate::segmentation::{
    EventPartition, FeatureSequence, FrameSequence, PooledSequence, ScoreSequence, SimilaritySource, Video,
};
pub use crate::tensor::Matrix;
