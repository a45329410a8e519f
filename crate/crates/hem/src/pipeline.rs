//! Stage orchestration behind the CLI subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use hem_core::gradcheck::{self, GradCheckOptions, Parameter};
use hem_core::head::head_loss;
use hem_core::sampler::{sample, SampleRequest};
use hem_core::segmentation::{adjacent_scores, pool_frames, segment};
use hem_core::{HemModel, ModelConfig, Video};
use log::{debug, info};
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, Scheme};
use crate::format::{self, Tensor};
use crate::report::{GradcheckReport, RunReport, SampleReport, SegmentReport};

fn require<'a>(path: &'a Option<PathBuf>, what: &str) -> anyhow::Result<&'a Path> {
    match path {
        Some(p) => Ok(p),
        None => bail!("missing {what} path"),
    }
}

pub fn load_video(path: &Path) -> anyhow::Result<Video> {
    format::ingest(path).with_context(|| format!("ingest: {}", path.display()))
}

pub fn segment_video(video: &Video, config: &RunConfig) -> anyhow::Result<SegmentReport> {
    let pipeline = config.pipeline();
    let partition = segment(video, pipeline.source, pipeline.num_events).context("segmentation")?;
    let scores = if video.len() >= 2 {
        let pooled = pool_frames(video, pipeline.source).context("segmentation")?;
        adjacent_scores(&pooled).context("segmentation")?.scores
    } else {
        Vec::new()
    };
    Ok(SegmentReport {
        frames: video.len(),
        num_events: partition.num_events(),
        source: pipeline.source.name().to_string(),
        scores,
        split_points: partition.split_points().to_vec(),
        event_ranges: partition.ranges().into_iter().map(Into::into).collect(),
    })
}

pub fn sample_plan(total_frames: usize, points: &[usize], scheme: Scheme) -> anyhow::Result<SampleReport> {
    let request = SampleRequest::new(total_frames, points.to_vec()).context("sampling")?;
    let plan = sample(&request, scheme.into()).context("sampling")?;
    Ok(SampleReport::new(scheme.into(), total_frames, points, plan))
}

/// Where the Z_v tensor goes for a given report path: `report.json` -> `report.zv.hemt`.
pub fn z_v_path(report: &Path) -> PathBuf {
    report.with_extension("zv.hemt")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Full pipeline: ingest, segment, memory loop, write Z_v and the JSON report.
pub fn run(config: &RunConfig) -> anyhow::Result<RunReport> {
    let started = Instant::now();
    let input = require(&config.input, "input")?;
    let output = require(&config.output, "output")?;

    let video = load_video(input)?;
    info!("ingested {} frames from {}", video.len(), input.display());

    let pipeline = config.pipeline();
    let model = HemModel::new(config.model()).context("model")?;
    let partition = segment(&video, pipeline.source, pipeline.num_events).context("segmentation")?;
    debug!("split points {:?}", partition.split_points());

    let plan = match partition.split_points() {
        &[p] => Some(sample_plan(video.len(), &[p], config.scheme)?),
        _ => None,
    };

    let out = model
        .run_partition(&video, partition, pipeline.capacity)
        .context("memory modeling")?;
    debug!("global memory sizes {:?}", out.memory_sizes);

    let loss = match config.target {
        Some(target) => {
            let head = model.head(out.events.len(), target).context("head")?;
            Some(head_loss(&out.z_v, &head).context("head")?.loss)
        }
        None => None,
    };

    let zv_path = z_v_path(output);
    let tensor = Tensor::from_matrix(&out.z_v);
    let bytes = format::write_hemt(&zv_path, &tensor).with_context(|| format!("write z_v: {}", zv_path.display()))?;

    let ranges = out.partition.ranges();
    let report = RunReport {
        input: input.display().to_string(),
        frames: video.len(),
        num_events: out.partition.num_events(),
        source: pipeline.source.name().to_string(),
        global_memory_cap: config.global_memory_cap.to_string(),
        seed: config.seed,
        split_points: out.partition.split_points().to_vec(),
        event_frame_counts: ranges.iter().map(|r| r.len()).collect(),
        event_ranges: ranges.into_iter().map(Into::into).collect(),
        global_memory_sizes: out.memory_sizes,
        z_v_path: zv_path.display().to_string(),
        z_v_dims: tensor.dims,
        z_v_checksum: sha256_hex(&bytes),
        target: config.target,
        loss,
        sample_plan: plan,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    let json = serde_json::to_string_pretty(&report)?;
    std::fs::write(output, json + "\n").with_context(|| format!("write report: {}", output.display()))?;
    Ok(report)
}

/// Toy dimensions used when no config file is given.
pub fn gradcheck_model_config(seed: u64) -> ModelConfig {
    ModelConfig {
        dim: 8,
        tokens_per_frame: 4,
        queries: 4,
        heads: 2,
        classes: 3,
        seed,
    }
}

pub fn gradcheck(model: ModelConfig, corrupt: bool) -> anyhow::Result<GradcheckReport> {
    if model.dim > 32 {
        bail!("gradcheck is limited to d <= 32, got {}", model.dim);
    }
    let (model, head, video, partition, capacity) = gradcheck::toy_instance(model).context("gradcheck setup")?;
    let options = GradCheckOptions {
        corrupt: corrupt.then_some(1e-2),
        ..Default::default()
    };
    let report =
        gradcheck::check_pipeline(&model, &head, &video, &partition, capacity, &options).context("gradcheck")?;
    Ok(GradcheckReport {
        epsilon: report.epsilon,
        tolerance: report.tolerance,
        loss: report.loss,
        checked: report.checked,
        max_relative_error: report.max_relative_error,
        worst_parameter: match report.worst.0 {
            Parameter::Projection => "projection",
            Parameter::Queries => "queries",
        }
        .to_string(),
        worst_index: report.worst.1,
        passed: report.passed,
    })
}
