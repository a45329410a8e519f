//! File formats, configuration and the command-line driver around `hem-core`.

pub mod config;
pub mod format;
pub mod pipeline;
pub mod report;

pub use config::{Cap, Overrides, Preset, RunConfig, Scheme, Source};
pub use format::{ingest, read_tensor, write_hemt, FormatError, Tensor};
pub use report::{GradcheckReport, RunReport, SampleReport, SegmentReport};
