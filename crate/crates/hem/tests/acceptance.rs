//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.
//!
//! Run with `cargo test -p hem --test acceptance`.

use std::path::Path;
use std::time::{Duration, Instant};

use hem::config::{Overrides, RunConfig};
use hem::format::{self, frames_tensor};
use hem::pipeline;
use hem_core::attention::{self, AttentionParams};
use hem_core::gradcheck::{check_pipeline, toy_instance, GradCheckOptions};
use hem_core::memory::{Capacity, GlobalMemory, QueryBank};
use hem_core::sampler::{sample, SampleRequest, SamplingScheme};
use hem_core::segmentation::{segment, FrameSequence, SimilaritySource, Video};
use hem_core::{Matrix, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(limit: Duration, started: Instant) -> Result<Duration, String> {
    let elapsed = started.elapsed();
    if elapsed >= limit {
        return Err(format!("took {elapsed:?}, limit {limit:?}"));
    }
    Ok(elapsed)
}

fn random_frames(rng: &mut ChaCha8Rng, t: usize, h: usize, w: usize, max: f64) -> FrameSequence {
    let data = (0..3 * t * h * w).map(|_| rng.gen_range(0.0..max)).collect();
    FrameSequence::new(t, h, w, data).unwrap()
}

/// Independent reimplementation: per-channel means, cosine, argsort by (score, index).
fn oracle_boundaries(frames: &FrameSequence, k: usize) -> Vec<usize> {
    let t = frames.len();
    let plane = frames.height() * frames.width();
    let data = frames.as_slice();
    let pooled: Vec<[f64; 3]> = (0..t)
        .map(|i| {
            let mut v = [0.0; 3];
            for (c, slot) in v.iter_mut().enumerate() {
                let start = (c * t + i) * plane;
                *slot = data[start..start + plane].iter().sum::<f64>() / plane as f64;
            }
            v
        })
        .collect();
    let scores: Vec<f64> = pooled
        .windows(2)
        .map(|w| {
            let dot: f64 = (0..3).map(|c| w[0][c] * w[1][c]).sum();
            let n0: f64 = w[0].iter().map(|x| x * x).sum::<f64>();
            let n1: f64 = w[1].iter().map(|x| x * x).sum::<f64>();
            dot / (n0 * n1).sqrt()
        })
        .collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));
    let mut out: Vec<usize> = order[..k - 1].iter().map(|i| i + 1).collect();
    out.sort();
    out
}

fn ac1_segmentation_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let started = Instant::now();
    let mut agree = 0;
    for trial in 0..200 {
        let t = rng.gen_range(2..=12);
        let k = rng.gen_range(1..=t);
        let frames = random_frames(&mut rng, t, 3, 3, 1.0);
        let expected = oracle_boundaries(&frames, k);
        let got = segment(&Video::Frames(frames), SimilaritySource::RawAvgpool, k)
            .map_err(|e| format!("trial {trial}: {e}"))?;
        ensure!(
            got.split_points() == expected,
            "trial {trial}: {:?} vs oracle {expected:?}",
            got.split_points()
        );
        agree += 1;
    }
    let elapsed = within(Duration::from_secs(1), started)?;
    Ok(format!("{agree}/200 agree in {elapsed:?}"))
}

fn block_clip(rng: &mut ChaCha8Rng, k: usize) -> (FrameSequence, Vec<usize>) {
    // Distinct pooled directions: each block colour differs clearly from the previous one.
    let mut colours: Vec<[f64; 3]> = Vec::new();
    while colours.len() < k {
        let c = [
            rng.gen_range(0.05..1.0),
            rng.gen_range(0.05..1.0),
            rng.gen_range(0.05..1.0),
        ];
        if let Some(prev) = colours.last() {
            let dot: f64 = (0..3).map(|i| c[i] * prev[i]).sum();
            let cos = dot / (c.iter().map(|x| x * x).sum::<f64>() * prev.iter().map(|x| x * x).sum::<f64>()).sqrt();
            if cos > 0.99 {
                continue;
            }
        }
        colours.push(c);
    }
    let (h, w) = (4, 4);
    let mut frames = Vec::new();
    let mut joins = Vec::new();
    for (b, colour) in colours.iter().enumerate() {
        if b > 0 {
            joins.push(frames.len());
        }
        for _ in 0..rng.gen_range(1..=6) {
            frames.push(
                colour
                    .iter()
                    .flat_map(|&v| std::iter::repeat_n(v, h * w))
                    .collect::<Vec<_>>(),
            );
        }
    }
    (FrameSequence::from_frames(h, w, &frames).unwrap(), joins)
}

fn ac2_synthetic_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let started = Instant::now();
    for trial in 0..100 {
        let k = [2, 3, 4][trial % 3];
        let (frames, joins) = block_clip(&mut rng, k);
        let p = segment(&Video::Frames(frames), SimilaritySource::RawAvgpool, k).map_err(|e| e.to_string())?;
        ensure!(
            p.split_points() == joins,
            "trial {trial}: {:?} vs joins {joins:?}",
            p.split_points()
        );
    }
    let elapsed = within(Duration::from_secs(1), started)?;
    Ok(format!("100/100 recovered in {elapsed:?}"))
}

fn ac3_attention_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut rows = 0;
    for call in 0..1000 {
        let heads = [1, 2, 4][call % 3];
        let d = heads * rng.gen_range(1..=4);
        let scale = [0.1, 1.0, 10.0, 100.0][call % 4];
        let w = |rng: &mut ChaCha8Rng| Matrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
        let params = AttentionParams::new(w(&mut rng), w(&mut rng), w(&mut rng), heads).unwrap();
        let nq = rng.gen_range(1..=8);
        let nk = rng.gen_range(1..=24);
        let xq = Matrix::from_fn(d, nq, |_, _| rng.gen_range(-scale..scale));
        let xkv = Matrix::from_fn(d, nk, |_, _| rng.gen_range(-scale..scale));
        let (_, cache) = attention::forward(&params, &xq, &xkv).map_err(|e| e.to_string())?;
        for a in &cache.weights {
            for r in 0..a.rows() {
                ensure!(a.row(r).iter().all(|v| *v >= 0.0), "call {call}: negative weight");
                worst = worst.max((a.row(r).iter().sum::<f64>() - 1.0).abs());
                rows += 1;
            }
        }
    }
    if worst > 1e-9 {
        return Err(format!("max row-sum deviation {worst:e}"));
    }
    Ok(format!("{rows} rows, max |sum - 1| = {worst:.1e}"))
}

fn ac4_gradients() -> Outcome {
    let started = Instant::now();
    let config = ModelConfig {
        dim: 8,
        tokens_per_frame: 4,
        queries: 4,
        heads: 2,
        classes: 3,
        seed: 0,
    };
    let (model, head, video, partition, cap) = toy_instance(config).map_err(|e| e.to_string())?;
    let ranges = partition.ranges();
    ensure!(
        ranges.len() == 2 && ranges.iter().all(|r| r.len() == 3),
        "toy instance events {ranges:?}"
    );
    let options = GradCheckOptions::default();
    ensure!(
        options.epsilon == 1e-5 && options.tolerance == 1e-4,
        "unexpected options {options:?}"
    );
    let report = check_pipeline(&model, &head, &video, &partition, cap, &options).map_err(|e| e.to_string())?;
    ensure!(
        report.passed,
        "max relative error {:e} at {:?}",
        report.max_relative_error,
        report.worst
    );
    let elapsed = within(Duration::from_secs(10), started)?;
    Ok(format!(
        "{} parameters, max relative error {:.2e} in {elapsed:?}",
        report.checked, report.max_relative_error
    ))
}

fn ac5_compression() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let banks: Vec<QueryBank> = (0..10)
        .map(|_| {
            let mut bank = QueryBank::new();
            for _ in 0..5 {
                bank.collect(Matrix::from_fn(4, 3, |_, _| rng.gen_range(-1.0..1.0)))
                    .unwrap();
            }
            bank
        })
        .collect();

    let mut gm = GlobalMemory::new(Capacity::Blocks(8));
    let mut peak = 0;
    for bank in &banks {
        gm.append_event(bank).map_err(|e| e.to_string())?;
        peak = peak.max(gm.len());
        ensure!(gm.len() <= 8, "global memory grew to {}", gm.len());
    }

    let a = Matrix::from_fn(4, 3, |_, _| rng.gen_range(-1.0..1.0));
    let b = Matrix::from_fn(4, 3, |_, _| rng.gen_range(-1.0..1.0));
    let mut pair = QueryBank::new();
    for m in [&a, &a, &b] {
        pair.collect(m.clone()).unwrap();
    }
    let mut merged = GlobalMemory::new(Capacity::Blocks(2));
    merged.append_event(&pair).map_err(|e| e.to_string())?;
    ensure!(
        merged.blocks()[0].tokens.as_slice() == a.as_slice() && merged.blocks()[1].tokens.as_slice() == b.as_slice(),
        "identical-pair merge was lossy"
    );

    let mut unbounded = GlobalMemory::new(Capacity::Unbounded);
    for bank in &banks {
        unbounded.append_event(bank).map_err(|e| e.to_string())?;
    }
    let expected: Vec<&Matrix> = banks.iter().flat_map(|b| b.blocks()).collect();
    let concat = Matrix::hcat(&expected).unwrap();
    let got = unbounded.tokens().unwrap();
    ensure!(
        got.shape() == concat.shape()
            && got
                .as_slice()
                .iter()
                .zip(concat.as_slice())
                .all(|(x, y)| x.to_bits() == y.to_bits()),
        "unbounded memory differs from concatenation"
    );
    Ok(format!(
        "peak {peak} <= 8 blocks, lossless merge, unbounded == concat ({} blocks)",
        unbounded.len()
    ))
}

fn ac6_sampling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let started = Instant::now();
    for trial in 0..100 {
        let t = rng.gen_range(2..=64);
        let batch = rng.gen_range(1..=8);
        let points: Vec<usize> = (0..batch).map(|_| rng.gen_range(1..t)).collect();
        let req = SampleRequest::new(t, points.clone()).map_err(|e| e.to_string())?;
        for scheme in [SamplingScheme::MaxLength, SamplingScheme::AverageSplit] {
            let plan = sample(&req, scheme).map_err(|e| e.to_string())?;
            for (item, &p) in plan.items.iter().zip(&points) {
                ensure!(
                    item.left.len() == plan.left_len && item.right.len() == plan.right_len,
                    "trial {trial}: ragged plan"
                );
                ensure!(
                    item.left.iter().all(|&i| i <= p),
                    "trial {trial}: left index out of [0, {p}]"
                );
                ensure!(
                    item.right.iter().all(|&i| (p..t).contains(&i)),
                    "trial {trial}: right index out of [{p}, {}]",
                    t - 1
                );
            }
            if scheme == SamplingScheme::MaxLength {
                let left = points.iter().map(|p| p + 1).max().unwrap();
                let right = points.iter().map(|p| t - p).max().unwrap();
                ensure!(
                    (plan.left_len, plan.right_len) == (left, right),
                    "trial {trial}: lengths {:?} vs max segment sizes {:?}",
                    (plan.left_len, plan.right_len),
                    (left, right)
                );
            }
        }
    }
    let elapsed = within(Duration::from_secs(1), started)?;
    Ok(format!("100 batches x 2 schemes in {elapsed:?}"))
}

fn write_clip(dir: &Path, name: &str, events: usize) -> std::path::PathBuf {
    let frames = hem_core::gradcheck::block_video(events, 2, 8, 8, 11).unwrap();
    let path = dir.join(name);
    format::write_hemt(&path, &frames_tensor(&frames)).unwrap();
    path
}

fn run_config(input: &Path, output: &Path, events: usize) -> RunConfig {
    RunConfig::resolve(
        None,
        Overrides {
            input: Some(input.to_path_buf()),
            output: Some(output.to_path_buf()),
            events: Some(events),
            ..Default::default()
        },
    )
    .unwrap()
}

fn ac7_shape_contract(dir: &Path) -> Outcome {
    let input = write_clip(dir, "clip4.hemt", 4);
    let mut widths = Vec::new();
    for k in 1..=4 {
        let output = dir.join(format!("shape_k{k}.json"));
        let config = run_config(&input, &output, k);
        ensure!(config.q == 32, "default q is {}", config.q);
        let report = pipeline::run(&config).map_err(|e| format!("K={k}: {e:#}"))?;
        let z_v = format::read_tensor(Path::new(&report.z_v_path)).map_err(|e| e.to_string())?;
        ensure!(z_v.dims == vec![config.d, 32 * k], "K={k}: Z_v dims {:?}", z_v.dims);
        widths.push(z_v.dims[1]);
    }
    Ok(format!("Z_v widths {widths:?} for K = 1..4"))
}

fn ac8_determinism(dir: &Path) -> Outcome {
    let input = write_clip(dir, "clip3.hemt", 3);
    let first = pipeline::run(&run_config(&input, &dir.join("det_a.json"), 3)).map_err(|e| format!("{e:#}"))?;
    let second = pipeline::run(&run_config(&input, &dir.join("det_b.json"), 3)).map_err(|e| format!("{e:#}"))?;
    let a = std::fs::read(&first.z_v_path).map_err(|e| e.to_string())?;
    let b = std::fs::read(&second.z_v_path).map_err(|e| e.to_string())?;
    ensure!(a == b, "Z_v files differ");
    ensure!(first.z_v_checksum == second.z_v_checksum, "checksums differ");
    Ok(format!(
        "{} identical bytes, sha256 {}",
        a.len(),
        &first.z_v_checksum[..16]
    ))
}

fn ac9_scale_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..100 {
        let t = rng.gen_range(2..=16);
        let k = rng.gen_range(1..=t);
        // Base values stay below 1/7.3 so the scaled clip is still a valid [0, 1] clip.
        let base = random_frames(&mut rng, t, 4, 4, 1.0 / 7.3);
        let scaled_data: Vec<f64> = base.as_slice().iter().map(|v| v * 7.3).collect();
        let scaled = FrameSequence::new(t, 4, 4, scaled_data).map_err(|e| e.to_string())?;
        let a = segment(&Video::Frames(base), SimilaritySource::RawAvgpool, k).map_err(|e| e.to_string())?;
        let b = segment(&Video::Frames(scaled), SimilaritySource::RawAvgpool, k).map_err(|e| e.to_string())?;
        ensure!(
            a.split_points() == b.split_points(),
            "trial {trial}: {:?} vs {:?}",
            a.split_points(),
            b.split_points()
        );
    }
    Ok("100/100 videos keep their split points under x7.3".to_string())
}

fn main() {
    let dir = tempfile::tempdir().expect("tempdir");
    let criteria: Vec<Criterion> = vec![
        (
            "AC1 segmentation matches argsort oracle",
            Box::new(ac1_segmentation_oracle),
        ),
        ("AC2 synthetic boundary recovery", Box::new(ac2_synthetic_recovery)),
        ("AC3 attention rows sum to 1", Box::new(ac3_attention_normalization)),
        ("AC4 analytic vs finite-difference gradients", Box::new(ac4_gradients)),
        ("AC5 global memory compression", Box::new(ac5_compression)),
        ("AC6 sampling shape uniformity", Box::new(ac6_sampling)),
        ("AC7 end-to-end Z_v shape", Box::new(|| ac7_shape_contract(dir.path()))),
        ("AC8 determinism", Box::new(|| ac8_determinism(dir.path()))),
        ("AC9 cosine scale invariance", Box::new(ac9_scale_invariance)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
