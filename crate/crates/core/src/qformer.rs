//! The query-token attention block and the per-event memory loop.
//!
//! For every event, frame by frame:
//!
//! 1. encode the frame to `d x p` tokens and add the positional encoding of its
//!    index within the event;
//! 2. append the tokens to the event's local memory;
//! 3. let the learned queries attend over the global memory (or over themselves
//!    while the global memory is still empty), giving `O`;
//! 4. let `O` attend over the local memory, giving `O_c`;
//! 5. collect `O` into the event's query bank.
//!
//! The event token is `O_c` of the last frame. When the event ends its query bank
//! is appended to the global memory, and the event tokens of all events are
//! concatenated into `Z_v` (`d x q*K`).

use alloc::vec::Vec;
use core::ops::Range;

use crate::attention::{self, AttentionCache, AttentionParams};
use crate::encoder::{positional_encoding, ToyEncoder};
use crate::error::{Error, Result};
use crate::head::ToyHead;
use crate::memory::{Capacity, GlobalMemory, LocalMemory, QueryBank};
use crate::rng;
use crate::segmentation::{segment, EventPartition, SimilaritySource, Video};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    /// Channel dimension `d`.
    pub dim: usize,
    /// Visual tokens per frame `p`.
    pub tokens_per_frame: usize,
    /// Learned query tokens `q`.
    pub queries: usize,
    pub heads: usize,
    /// Classes of the toy head.
    pub classes: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            tokens_per_frame: 16,
            queries: 32,
            heads: 1,
            classes: 4,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("dim", self.dim),
            ("tokens_per_frame", self.tokens_per_frame),
            ("queries", self.queries),
            ("heads", self.heads),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(alloc::format!("{name} must be at least 1")));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(alloc::format!(
                "dim {} not divisible by heads {}",
                self.dim,
                self.heads
            )));
        }
        if self.classes < 2 {
            return Err(Error::Config("classes must be at least 2".into()));
        }
        Ok(())
    }
}

/// Stage settings that do not change model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineConfig {
    pub num_events: usize,
    pub source: SimilaritySource,
    pub capacity: Capacity,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            num_events: 4,
            source: SimilaritySource::RawAvgpool,
            capacity: Capacity::Blocks(Capacity::DEFAULT_BLOCKS),
        }
    }
}

/// Seeded model parameters: query tokens, two attention blocks and the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct HemModel {
    config: ModelConfig,
    queries: Matrix,
    self_attn: AttentionParams,
    cross_attn: AttentionParams,
    encoder: ToyEncoder,
}

/// One event's final cross-attention output and its query bank.
#[derive(Debug, Clone, PartialEq)]
pub struct EventOutput {
    pub token: Matrix,
    pub bank: QueryBank,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub partition: EventPartition,
    pub events: Vec<EventOutput>,
    /// Global memory block count after each event.
    pub memory_sizes: Vec<usize>,
    pub z_v: Matrix,
}

/// Self-attention of the query tokens against the global memory.
///
/// An empty global memory falls back to the queries themselves as keys/values.
pub fn self_attn_queries(queries: &Matrix, gm: &GlobalMemory, params: &AttentionParams) -> Result<Matrix> {
    let memory = gm.tokens();
    let kv = memory.as_ref().unwrap_or(queries);
    attention::forward(params, queries, kv).map(|(o, _)| o)
}

/// Cross-attention of `o` against the local memory.
pub fn cross_attn_local(o: &Matrix, lm: &LocalMemory, params: &AttentionParams) -> Result<Matrix> {
    if lm.is_empty() {
        return Err(Error::Empty("local memory"));
    }
    attention::forward(params, o, lm.tokens()).map(|(out, _)| out)
}

/// Column-wise concatenation of the event tokens, in event order.
pub fn concat_events(tokens: &[Matrix]) -> Result<Matrix> {
    let Some(first) = tokens.first() else {
        return Err(Error::Empty("event token list"));
    };
    if let Some(bad) = tokens.iter().find(|t| t.shape() != first.shape()) {
        return Err(Error::ShapeMismatch {
            op: "concat events",
            left_rows: first.rows(),
            left_cols: first.cols(),
            right_rows: bad.rows(),
            right_cols: bad.cols(),
        });
    }
    let refs: Vec<&Matrix> = tokens.iter().collect();
    Matrix::hcat(&refs)
}

struct StepTrace {
    self_cache: AttentionCache,
    /// Source weights per global-memory block used as keys/values; `None` when
    /// the queries attended over themselves.
    kv_sources: Option<Vec<Vec<(usize, f64)>>>,
    cross_cache: AttentionCache,
}

struct EventTrace {
    first_index: usize,
    steps: Vec<StepTrace>,
}

/// Forward intermediates for [`HemModel::backward_queries`].
pub struct PipelineTrace {
    events: Vec<EventTrace>,
}

impl HemModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(config.seed, rng::STREAM_QUERY);
        let queries = rng::uniform_matrix(&mut rng, config.dim, config.queries, 1.0);
        let self_attn = AttentionParams::seeded(config.dim, config.heads, config.seed, rng::STREAM_SELF_ATTN)?;
        let cross_attn = AttentionParams::seeded(config.dim, config.heads, config.seed, rng::STREAM_CROSS_ATTN)?;
        let encoder = ToyEncoder::new(config.dim, config.tokens_per_frame, config.seed)?;
        Ok(Self {
            config,
            queries,
            self_attn,
            cross_attn,
            encoder,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn queries(&self) -> &Matrix {
        &self.queries
    }

    pub fn set_queries(&mut self, queries: Matrix) -> Result<()> {
        if queries.shape() != self.queries.shape() {
            return Err(Error::ShapeMismatch {
                op: "set queries",
                left_rows: self.queries.rows(),
                left_cols: self.queries.cols(),
                right_rows: queries.rows(),
                right_cols: queries.cols(),
            });
        }
        self.queries = queries;
        Ok(())
    }

    pub fn self_attn(&self) -> &AttentionParams {
        &self.self_attn
    }

    pub fn cross_attn(&self) -> &AttentionParams {
        &self.cross_attn
    }

    pub fn encoder(&self) -> &ToyEncoder {
        &self.encoder
    }

    /// Seeded toy head sized for `num_events` event tokens.
    pub fn head(&self, num_events: usize, target: usize) -> Result<ToyHead> {
        let input_len = self.config.dim * self.config.queries * num_events;
        ToyHead::seeded(self.config.classes, input_len, target, self.config.seed)
    }

    /// Encoded tokens of frame `t` plus the positional encoding of `timestamp`.
    pub fn frame_tokens(&self, video: &Video, t: usize, timestamp: usize) -> Result<Matrix> {
        let tokens = match video {
            Video::Frames(frames) => self.encoder.encode(&frames.frame(t), frames.height(), frames.width())?,
            Video::Features(features) => {
                let f = features.frame(t);
                if f.rows() != self.config.dim {
                    return Err(Error::ShapeMismatch {
                        op: "feature dimension",
                        left_rows: self.config.dim,
                        left_cols: f.cols(),
                        right_rows: f.rows(),
                        right_cols: f.cols(),
                    });
                }
                f.clone()
            }
        };
        tokens.add_to_columns(&positional_encoding(timestamp, self.config.dim))
    }

    pub fn process_event(&self, video: &Video, frames: Range<usize>, gm: &GlobalMemory) -> Result<EventOutput> {
        self.process_event_traced(video, frames, gm).map(|(out, _)| out)
    }

    fn process_event_traced(
        &self,
        video: &Video,
        frames: Range<usize>,
        gm: &GlobalMemory,
    ) -> Result<(EventOutput, EventTrace)> {
        if frames.is_empty() || frames.end > video.len() {
            return Err(Error::Empty("event frame range"));
        }
        let memory = gm.tokens();
        let kv_sources = memory
            .as_ref()
            .map(|_| gm.blocks().iter().map(|b| b.sources.clone()).collect::<Vec<_>>());
        let kv = memory.as_ref().unwrap_or(&self.queries);

        let mut lm = LocalMemory::new(self.config.dim);
        let mut bank = QueryBank::new();
        let mut steps = Vec::with_capacity(frames.len());
        let mut token = None;
        for (timestamp, t) in frames.enumerate() {
            lm.append(&self.frame_tokens(video, t, timestamp)?)?;
            let (o, self_cache) = attention::forward(&self.self_attn, &self.queries, kv)?;
            let (o_c, cross_cache) = attention::forward(&self.cross_attn, &o, lm.tokens())?;
            bank.collect(o)?;
            token = Some(o_c);
            steps.push(StepTrace {
                self_cache,
                kv_sources: kv_sources.clone(),
                cross_cache,
            });
        }
        let token = token.expect("event has at least one frame");
        let trace = EventTrace {
            first_index: gm.appended(),
            steps,
        };
        Ok((EventOutput { token, bank }, trace))
    }

    /// Segments `video` and runs every event through the memory loop.
    pub fn run(&self, video: &Video, config: &PipelineConfig) -> Result<PipelineOutput> {
        let partition = segment(video, config.source, config.num_events)?;
        self.run_partition(video, partition, config.capacity)
    }

    pub fn run_partition(
        &self,
        video: &Video,
        partition: EventPartition,
        capacity: Capacity,
    ) -> Result<PipelineOutput> {
        self.run_traced(video, partition, capacity).map(|(out, _)| out)
    }

    pub fn run_traced(
        &self,
        video: &Video,
        partition: EventPartition,
        capacity: Capacity,
    ) -> Result<(PipelineOutput, PipelineTrace)> {
        let mut gm = GlobalMemory::new(capacity);
        let mut events = Vec::with_capacity(partition.num_events());
        let mut traces = Vec::with_capacity(partition.num_events());
        let mut memory_sizes = Vec::with_capacity(partition.num_events());
        for range in partition.ranges() {
            let (event, trace) = self.process_event_traced(video, range, &gm)?;
            gm.append_event(&event.bank)?;
            memory_sizes.push(gm.len());
            events.push(event);
            traces.push(trace);
        }
        let tokens: Vec<Matrix> = events.iter().map(|e| e.token.clone()).collect();
        let z_v = concat_events(&tokens)?;
        Ok((
            PipelineOutput {
                partition,
                events,
                memory_sizes,
                z_v,
            },
            PipelineTrace { events: traces },
        ))
    }

    /// Gradient of a scalar loss with respect to the query tokens, given
    /// `d_z_v = dL/dZ_v`. Attention projections and frame tokens are held fixed.
    pub fn backward_queries(&self, trace: &PipelineTrace, d_z_v: &Matrix) -> Result<Matrix> {
        let q = self.config.queries;
        let total: usize = trace.events.iter().map(|e| e.steps.len()).sum();
        if d_z_v.shape() != (self.config.dim, q * trace.events.len()) {
            return Err(Error::ShapeMismatch {
                op: "backward queries",
                left_rows: self.config.dim,
                left_cols: q * trace.events.len(),
                right_rows: d_z_v.rows(),
                right_cols: d_z_v.cols(),
            });
        }
        let zero = Matrix::zeros(self.config.dim, q);
        // Gradient w.r.t. every collected self-attention output, by append index.
        let mut d_collected = alloc::vec![zero.clone(); total];
        let mut d_queries = zero;

        for (e, event) in trace.events.iter().enumerate().rev() {
            let last = event.steps.len() - 1;
            let d_token = d_z_v.columns(e * q, (e + 1) * q);
            let (d_o, _) = attention::backward(&self.cross_attn, &event.steps[last].cross_cache, &d_token)?;
            d_collected[event.first_index + last].add_assign(&d_o)?;

            for (s, step) in event.steps.iter().enumerate().rev() {
                let d_o = &d_collected[event.first_index + s];
                let (d_xq, d_xkv) = attention::backward(&self.self_attn, &step.self_cache, d_o)?;
                d_queries.add_assign(&d_xq)?;
                match &step.kv_sources {
                    None => d_queries.add_assign(&d_xkv)?,
                    Some(blocks) => {
                        for (b, sources) in blocks.iter().enumerate() {
                            let d_block = d_xkv.columns(b * q, (b + 1) * q);
                            for &(src, w) in sources {
                                debug_assert!(src < event.first_index);
                                d_collected[src].add_assign(&d_block.scale(w))?;
                            }
                        }
                    }
                }
            }
        }
        Ok(d_queries)
    }
}
