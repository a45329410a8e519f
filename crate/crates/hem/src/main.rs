use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use hem::config::{Cap, Overrides, Preset, RunConfig, Scheme, Source};
use hem::format;
use hem::pipeline;
use hem_core::gradcheck::block_video;
use hem_core::segmentation::segment;
use hem_core::SimilaritySource;

#[derive(Parser)]
#[command(name = "hem", version, about = "Event-segmented hierarchical memory pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a clip into events and print the boundaries.
    Segment(CommonArgs),
    /// Build a batched two-event sampling plan.
    Sample(SampleArgs),
    /// Run the full pipeline, writing Z_v and a JSON report.
    Run(CommonArgs),
    /// Compare analytic and finite-difference gradients on a toy instance.
    Gradcheck(GradcheckArgs),
    /// Write a synthetic clip of constant-colour blocks.
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    events: Option<usize>,
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long, value_enum)]
    source: Option<Source>,
    #[arg(long)]
    cap: Option<Cap>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Target class for the toy head loss.
    #[arg(long)]
    target: Option<usize>,
}

impl CommonArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        RunConfig::resolve(
            self.config.as_deref(),
            Overrides {
                input: self.input.clone(),
                output: self.output.clone(),
                events: self.events,
                scheme: self.scheme,
                source: self.source,
                cap: self.cap,
                seed: self.seed,
                preset: self.preset,
                target: self.target,
            },
        )
        .context("config")
    }
}

#[derive(Args)]
struct SampleArgs {
    /// Shared frame count of the batch.
    #[arg(long, requires = "points")]
    frames: Option<usize>,
    /// One split point per batch item, comma separated.
    #[arg(long, value_delimiter = ',')]
    points: Vec<usize>,
    /// Clips to segment into two events each instead of giving points directly.
    #[arg(long, conflicts_with_all = ["frames", "points"])]
    input: Vec<PathBuf>,
    #[arg(long, default_value = "1")]
    scheme: Scheme,
    #[arg(long, value_enum, default_value = "raw")]
    source: Source,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// JSON config supplying d, p, q, heads, classes and seed.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Negative control: perturb the analytic gradient before comparing.
    #[arg(long, hide = true)]
    corrupt: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    blocks: usize,
    #[arg(long, default_value_t = 5)]
    frames_per_block: usize,
    #[arg(long, default_value_t = 16)]
    height: usize,
    #[arg(long, default_value_t = 16)]
    width: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

fn emit(json: String, output: Option<&std::path::Path>) -> anyhow::Result<()> {
    match output {
        Some(path) => std::fs::write(path, json + "\n").with_context(|| format!("write report: {}", path.display())),
        None => match writeln!(std::io::stdout(), "{json}") {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
            _ => Ok(()),
        },
    }
}

fn execute(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Segment(args) => {
            let config = args.resolve()?;
            let Some(input) = &config.input else {
                bail!("segment needs --input");
            };
            let video = pipeline::load_video(input)?;
            let report = pipeline::segment_video(&video, &config)?;
            emit(serde_json::to_string_pretty(&report)?, config.output.as_deref())?;
        }
        Command::Sample(args) => {
            let (frames, points) = if args.input.is_empty() {
                let Some(frames) = args.frames else {
                    bail!("sample needs --frames and --points, or --input");
                };
                (frames, args.points)
            } else {
                let source: SimilaritySource = args.source.into();
                let mut frames = None;
                let mut points = Vec::with_capacity(args.input.len());
                for path in &args.input {
                    let video = pipeline::load_video(path)?;
                    if frames.is_some_and(|f| f != video.len()) {
                        bail!("sampling: batch clips must share a frame count");
                    }
                    frames = Some(video.len());
                    let partition = segment(&video, source, 2).context("segmentation")?;
                    points.push(partition.split_points()[0]);
                }
                (frames.unwrap_or(0), points)
            };
            let report = pipeline::sample_plan(frames, &points, args.scheme)?;
            emit(serde_json::to_string_pretty(&report)?, args.output.as_deref())?;
        }
        Command::Run(args) => {
            let config = args.resolve()?;
            let report = pipeline::run(&config)?;
            println!("{}", report.summary_line());
        }
        Command::Gradcheck(args) => {
            let mut model = match &args.config {
                Some(path) => RunConfig::load(path)?.model(),
                None => pipeline::gradcheck_model_config(0),
            };
            if let Some(seed) = args.seed {
                model.seed = seed;
            }
            let report = pipeline::gradcheck(model, args.corrupt)?;
            println!(
                "gradcheck eps={:e} checked={} max_rel_error={:.3e} tolerance={:e} worst={}[{}] {}",
                report.epsilon,
                report.checked,
                report.max_relative_error,
                report.tolerance,
                report.worst_parameter,
                report.worst_index,
                if report.passed { "PASS" } else { "FAIL" }
            );
            return Ok(report.passed);
        }
        Command::Synth(args) => {
            let frames =
                block_video(args.blocks, args.frames_per_block, args.height, args.width, args.seed).context("synth")?;
            format::write_hemt(&args.output, &format::frames_tensor(&frames))
                .with_context(|| format!("write: {}", args.output.display()))?;
            println!("wrote {} frames to {}", frames.len(), args.output.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HEM_LOG", "error")).init();
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
