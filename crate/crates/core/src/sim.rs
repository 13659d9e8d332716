//! Deterministic discrete-event simulator of the pipeline-parallel
//! stream-batch architecture.
//!
//! K stages are wired in a ring. A micro-step is one chunk of one stream at
//! one noise level; it traverses the ring once per denoising level, dropping
//! one level per wrap, and emits a clean chunk when it finishes the last
//! stage at level 0. Up to `n * B` micro-steps are in flight. Each device
//! owns two ordered execution queues, compute and transfer, which may
//! overlap each other but never themselves.

use crate::balance::{BlockCostProfile, Partition};
use crate::costmodel::{self, CommStrategy, DeviceSpec, ModelSpec, StreamShape};
use crate::slo::SloTarget;
use alloc::collections::{BinaryHeap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

/// One pipeline stage bound to one device.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StageSpec {
    pub stage_id: usize,
    /// DiT compute seconds per micro-step.
    pub compute_time: f64,
    pub has_vae_encode: bool,
    pub has_vae_decode: bool,
}

/// One chunk of one stream at one noise level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MicroStep {
    pub stream_id: usize,
    pub chunk_seq: usize,
    pub noise_level_index: usize,
    pub frames: usize,
}

/// Which per-device execution queue a span ran on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Queue {
    Compute,
    Transfer,
}

/// A closed interval of work on one device queue.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceSpan {
    pub device: usize,
    pub queue: Queue,
    pub start: f64,
    pub end: f64,
    pub step: MicroStep,
}

/// Latency distribution over completed chunks.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LatencyStats {
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
}

/// Measured SLO metrics of one simulation run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimReport {
    /// Buffering delay plus first clean chunk completion.
    pub ttff: f64,
    /// Frames per second after the warmup window (first n*B chunks).
    pub steady_fps: f64,
    pub per_chunk_latency: LatencyStats,
    /// Per-device compute idle fraction.
    pub bubble_fraction: Vec<f64>,
    pub slo_violations: usize,
    pub chunks_completed: usize,
    pub frames_emitted: usize,
    /// Time of the last completion.
    pub makespan: f64,
}

/// Point-to-point transfer cost of one inter-stage hop.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CommSpec {
    pub bytes_per_hop: f64,
    pub link_bandwidth: f64,
    pub link_latency: f64,
}

impl CommSpec {
    pub fn zero() -> Self {
        Self { bytes_per_hop: 0.0, link_bandwidth: 1.0, link_latency: 0.0 }
    }

    pub fn from_device(dev: &DeviceSpec, bytes_per_hop: f64) -> Self {
        Self { bytes_per_hop, link_bandwidth: dev.link_bandwidth, link_latency: dev.link_latency }
    }

    pub fn hop_time(&self) -> f64 {
        if self.bytes_per_hop <= 0.0 {
            0.0
        } else {
            self.bytes_per_hop / self.link_bandwidth + self.link_latency
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub stages: Vec<StageSpec>,
    pub vae_encode_time: f64,
    pub vae_decode_time: f64,
    pub batch_b: usize,
    pub denoise_steps_n: usize,
    pub chunk_frames: usize,
    /// Micro-steps admitted concurrently; `n * B` for stream-batch serving,
    /// 1 for the sequential baseline.
    pub in_flight_capacity: usize,
    pub comm: CommSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    MismatchedCounts { partition_stages: usize, devices: usize },
    MismatchedBlocks { profile_blocks: usize, partition_blocks: usize },
    EmptyPipeline,
    InvalidRun(&'static str),
}

impl core::fmt::Display for SimError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::MismatchedCounts { partition_stages, devices } => write!(
                f,
                "partition has {partition_stages} stages but {devices} devices were given"
            ),
            Self::MismatchedBlocks { profile_blocks, partition_blocks } => write!(
                f,
                "profile covers {profile_blocks} blocks, partition covers {partition_blocks}"
            ),
            Self::EmptyPipeline => write!(f, "pipeline needs at least one stage"),
            Self::InvalidRun(msg) => write!(f, "invalid run: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SimError {}

/// Wire a pipeline from a block partition and its cost profile: per-stage
/// DiT times are the partitioned block sums, VAE encode/decode stay on the
/// first/last device.
pub fn build_pipeline(
    partition: &Partition,
    profile: &BlockCostProfile,
    num_devices: usize,
    shape: &StreamShape,
    comm: CommSpec,
) -> Result<Pipeline, SimError> {
    let k = partition.stages();
    if k != num_devices {
        return Err(SimError::MismatchedCounts { partition_stages: k, devices: num_devices });
    }
    let n_blocks = profile.num_blocks();
    let ranges = partition.ranges(n_blocks);
    if ranges.last().map(|r| r.1) != Some(n_blocks) {
        return Err(SimError::MismatchedBlocks {
            profile_blocks: n_blocks,
            partition_blocks: ranges.last().map_or(0, |r| r.1),
        });
    }
    let stages = ranges
        .iter()
        .enumerate()
        .map(|(i, (lo, hi))| StageSpec {
            stage_id: i,
            compute_time: profile.block_times[*lo..*hi].iter().sum(),
            has_vae_encode: i == 0,
            has_vae_decode: i == k - 1,
        })
        .collect();
    Ok(Pipeline {
        stages,
        vae_encode_time: profile.vae_encode_time,
        vae_decode_time: profile.vae_decode_time,
        batch_b: shape.batch_b,
        denoise_steps_n: shape.denoise_steps_n,
        chunk_frames: shape.chunk_frames_t,
        in_flight_capacity: shape.denoise_steps_n * shape.batch_b,
        comm,
    })
}

impl Pipeline {
    /// Build directly from per-stage DiT times.
    pub fn from_stage_times(
        stage_times: &[f64],
        vae_encode_time: f64,
        vae_decode_time: f64,
        shape: &StreamShape,
        comm: CommSpec,
    ) -> Result<Self, SimError> {
        if stage_times.is_empty() {
            return Err(SimError::EmptyPipeline);
        }
        let k = stage_times.len();
        Ok(Self {
            stages: stage_times
                .iter()
                .enumerate()
                .map(|(i, t)| StageSpec {
                    stage_id: i,
                    compute_time: *t,
                    has_vae_encode: i == 0,
                    has_vae_decode: i == k - 1,
                })
                .collect(),
            vae_encode_time,
            vae_decode_time,
            batch_b: shape.batch_b,
            denoise_steps_n: shape.denoise_steps_n,
            chunk_frames: shape.chunk_frames_t,
            in_flight_capacity: shape.denoise_steps_n * shape.batch_b,
            comm,
        })
    }

    /// Sequential baseline: one chunk in flight at a time.
    pub fn without_stream_batch(mut self) -> Self {
        self.in_flight_capacity = 1;
        self
    }
}

/// How long to run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunLength {
    Chunks(usize),
    Seconds(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ev {
    ChunkReady { chunk: usize },
    ComputeEnd { dev: usize },
    TransferEnd { dev: usize },
}

struct QueuedEvent {
    time: f64,
    class: u8,
    dev: usize,
    seq: u64,
    ev: Ev,
}

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for QueuedEvent {}
impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueuedEvent {
    // reversed: BinaryHeap pops the max, we want the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.class.cmp(&self.class))
            .then(other.dev.cmp(&self.dev))
            .then(other.seq.cmp(&self.seq))
    }
}

struct ChunkState {
    stream: usize,
    ready: f64,
}

#[derive(Default)]
struct DeviceState {
    input: VecDeque<MicroStep>,
    computing: Option<(MicroStep, f64)>,
    xfer_queue: VecDeque<(MicroStep, usize)>,
    transferring: Option<(MicroStep, usize, f64)>,
    busy_compute: f64,
    first_start: Option<f64>,
    last_end: f64,
}

struct Engine<'a> {
    pipe: &'a Pipeline,
    devices: Vec<DeviceState>,
    heap: BinaryHeap<QueuedEvent>,
    seq: u64,
    chunks: Vec<ChunkState>,
    ready_pool: VecDeque<usize>,
    in_flight: usize,
    completions: Vec<(f64, usize)>, // (time, chunk index)
    trace: Vec<TraceSpan>,
}

impl<'a> Engine<'a> {
    fn push(&mut self, time: f64, class: u8, dev: usize, ev: Ev) {
        self.seq += 1;
        self.heap.push(QueuedEvent { time, class, dev, seq: self.seq, ev });
    }

    fn try_admit(&mut self, now: f64) {
        while self.in_flight < self.pipe.in_flight_capacity {
            let Some(&chunk) = self.ready_pool.front() else { break };
            self.ready_pool.pop_front();
            self.in_flight += 1;
            let step = MicroStep {
                stream_id: self.chunks[chunk].stream,
                chunk_seq: chunk,
                noise_level_index: self.pipe.denoise_steps_n - 1,
                frames: self.pipe.chunk_frames,
            };
            self.devices[0].input.push_back(step);
            self.try_start_compute(0, now);
        }
    }

    fn compute_cost(&self, dev: usize, step: &MicroStep) -> f64 {
        let stage = &self.pipe.stages[dev];
        let mut t = stage.compute_time;
        if stage.has_vae_encode && step.noise_level_index == self.pipe.denoise_steps_n - 1 {
            t += self.pipe.vae_encode_time;
        }
        if stage.has_vae_decode && step.noise_level_index == 0 {
            t += self.pipe.vae_decode_time;
        }
        t
    }

    fn try_start_compute(&mut self, dev: usize, now: f64) {
        if self.devices[dev].computing.is_some() {
            return;
        }
        let Some(step) = self.devices[dev].input.pop_front() else { return };
        let dur = self.compute_cost(dev, &step);
        self.devices[dev].computing = Some((step, now));
        self.devices[dev].first_start.get_or_insert(now);
        self.push(now + dur, 0, dev, Ev::ComputeEnd { dev });
    }

    fn try_start_transfer(&mut self, dev: usize, now: f64) {
        if self.devices[dev].transferring.is_some() {
            return;
        }
        let Some((step, dest)) = self.devices[dev].xfer_queue.pop_front() else { return };
        self.devices[dev].transferring = Some((step, dest, now));
        self.push(now + self.pipe.comm.hop_time(), 1, dev, Ev::TransferEnd { dev });
    }

    fn on_compute_end(&mut self, dev: usize, now: f64) {
        let (step, start) = self.devices[dev].computing.take().expect("compute end without work");
        self.trace.push(TraceSpan { device: dev, queue: Queue::Compute, start, end: now, step });
        self.devices[dev].busy_compute += now - start;
        self.devices[dev].last_end = now;

        let k = self.pipe.stages.len();
        let last = dev == k - 1;
        if last && step.noise_level_index == 0 {
            // clean chunk leaves the pipeline
            self.completions.push((now, step.chunk_seq));
            self.in_flight -= 1;
            self.try_admit(now);
        } else if k == 1 {
            // ring of one device: wrap without a transfer
            let next = MicroStep { noise_level_index: step.noise_level_index - 1, ..step };
            self.devices[0].input.push_back(next);
        } else {
            let (dest, next) = if last {
                (0, MicroStep { noise_level_index: step.noise_level_index - 1, ..step })
            } else {
                (dev + 1, step)
            };
            self.devices[dev].xfer_queue.push_back((next, dest));
            self.try_start_transfer(dev, now);
        }
        self.try_start_compute(dev, now);
    }

    fn on_transfer_end(&mut self, dev: usize, now: f64) {
        let (step, dest, start) =
            self.devices[dev].transferring.take().expect("transfer end without work");
        self.trace.push(TraceSpan { device: dev, queue: Queue::Transfer, start, end: now, step });
        self.devices[dev].last_end = self.devices[dev].last_end.max(now);
        self.devices[dest].input.push_back(step);
        self.try_start_compute(dest, now);
        self.try_start_transfer(dev, now);
    }
}

/// Run the pipeline to completion of the requested workload.
///
/// Event-driven and strictly deterministic: simultaneous events are ordered
/// by (time, queue class, device, sequence number). Identical inputs produce
/// identical traces.
pub fn run(
    pipe: &Pipeline,
    length: RunLength,
    input_fps: f64,
    slo: Option<&SloTarget>,
) -> Result<(SimReport, Vec<TraceSpan>), SimError> {
    if pipe.stages.is_empty() {
        return Err(SimError::EmptyPipeline);
    }
    if !(input_fps > 0.0) {
        return Err(SimError::InvalidRun("input_fps must be positive"));
    }
    if pipe.in_flight_capacity == 0 || pipe.denoise_steps_n == 0 {
        return Err(SimError::InvalidRun("need at least one denoise step and capacity"));
    }
    let t = pipe.chunk_frames as f64;
    let total_chunks = match length {
        RunLength::Chunks(n) => {
            if n == 0 {
                return Err(SimError::InvalidRun("chunk count must be positive"));
            }
            n
        }
        RunLength::Seconds(d) => {
            if !(d > 0.0) {
                return Err(SimError::InvalidRun("duration must be positive"));
            }
            let per_stream = (d * input_fps / t) as usize;
            (per_stream * pipe.batch_b).max(1)
        }
    };

    // admission order: chunk round, then stream id
    let mut chunks = Vec::with_capacity(total_chunks);
    let mut round = 0usize;
    'outer: loop {
        for s in 0..pipe.batch_b {
            if chunks.len() == total_chunks {
                break 'outer;
            }
            chunks.push(ChunkState { stream: s, ready: (round as f64 + 1.0) * t / input_fps });
        }
        round += 1;
    }

    let mut engine = Engine {
        pipe,
        devices: (0..pipe.stages.len()).map(|_| DeviceState::default()).collect(),
        heap: BinaryHeap::new(),
        seq: 0,
        ready_pool: VecDeque::new(),
        in_flight: 0,
        completions: Vec::new(),
        trace: Vec::new(),
        chunks,
    };
    for i in 0..engine.chunks.len() {
        let ready = engine.chunks[i].ready;
        engine.push(ready, 2, 0, Ev::ChunkReady { chunk: i });
    }

    while let Some(qe) = engine.heap.pop() {
        let now = qe.time;
        match qe.ev {
            Ev::ChunkReady { chunk } => {
                engine.ready_pool.push_back(chunk);
                engine.try_admit(now);
            }
            Ev::ComputeEnd { dev } => engine.on_compute_end(dev, now),
            Ev::TransferEnd { dev } => engine.on_transfer_end(dev, now),
        }
    }

    let completions = &engine.completions;
    if completions.len() != engine.chunks.len() {
        return Err(SimError::InvalidRun("simulation ended with work still in flight"));
    }

    let ttff = completions.first().map_or(0.0, |c| c.0);
    let makespan = completions.last().map_or(0.0, |c| c.0);

    // warmup window: first n*B chunks
    let warmup = pipe.denoise_steps_n * pipe.batch_b;
    let steady_fps = if completions.len() > warmup + 1 {
        let t0 = completions[warmup].0;
        let t1 = completions[completions.len() - 1].0;
        let n = (completions.len() - 1 - warmup) as f64;
        if t1 > t0 {
            n * t / (t1 - t0)
        } else {
            0.0
        }
    } else if makespan > 0.0 {
        completions.len() as f64 * t / makespan
    } else {
        0.0
    };

    let mut latencies: Vec<f64> = completions
        .iter()
        .map(|(done, idx)| done - engine.chunks[*idx].ready)
        .collect();
    latencies.sort_by(f64::total_cmp);
    let pct = |q: f64| -> f64 {
        if latencies.is_empty() {
            return 0.0;
        }
        let i = (crate::fmath::ceil(q * latencies.len() as f64) as usize).clamp(1, latencies.len());
        latencies[i - 1]
    };
    let stats = LatencyStats {
        p50: pct(0.50),
        p95: pct(0.95),
        max: latencies.last().copied().unwrap_or(0.0),
    };

    let slo_violations = slo.map_or(0, |s| {
        let deadline = s.per_frame_deadline * t;
        latencies.iter().filter(|l| **l > deadline).count()
    });

    let bubble_fraction = engine
        .devices
        .iter()
        .map(|d| {
            let span = d.first_start.map_or(0.0, |s| d.last_end - s);
            if span <= 0.0 {
                0.0
            } else {
                (1.0 - d.busy_compute / span).clamp(0.0, 1.0)
            }
        })
        .collect();

    let frames = completions.len() * pipe.chunk_frames;
    Ok((
        SimReport {
            ttff,
            steady_fps,
            per_chunk_latency: stats,
            bubble_fraction,
            slo_violations,
            chunks_completed: completions.len(),
            frames_emitted: frames,
            makespan,
        },
        engine.trace,
    ))
}

/// Per-micro-step block cost profile from the memory-traffic model, with the
/// parameter load amortized over the effective in-flight batch.
pub fn stage_profile_from_model(
    dev: &DeviceSpec,
    model: &ModelSpec,
    shape: &StreamShape,
    effective_batch: usize,
) -> BlockCostProfile {
    let tokens_per_item = shape.with_batch(1).tokens(model.pixel_to_token_ratio);
    let m = effective_batch.max(1) as f64;
    let eff_bw = dev.bandwidth_utilization_eta * dev.hbm_bandwidth;
    let per_block = (model.per_block_bytes_per_token * tokens_per_item
        + model.param_bytes() / model.num_blocks as f64 / m)
        / eff_bw;
    BlockCostProfile {
        block_times: vec![per_block; model.num_blocks],
        vae_encode_time: model.vae_encode_cost * shape.chunk_frames_t as f64,
        vae_decode_time: model.vae_decode_cost * shape.chunk_frames_t as f64,
    }
}

/// One row of a scenario sweep.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRow {
    pub gpus: usize,
    pub steps: usize,
    pub height: usize,
    pub width: usize,
    pub strategy: CommStrategy,
    pub report: SimReport,
}

/// Cartesian sweep grid over GPUs, denoise steps, resolutions, and
/// parallelization strategies.
#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub gpu_counts: Vec<usize>,
    pub step_counts: Vec<usize>,
    pub resolutions: Vec<(usize, usize)>,
    pub strategies: Vec<CommStrategy>,
    pub batch_b: usize,
    pub chunk_frames: usize,
    pub chunks: usize,
    pub input_fps: f64,
    /// Hidden dimension for activation traffic sizing.
    pub hidden_dim: usize,
    pub dtype_bytes: usize,
}

/// Run the full grid. Sequence-parallel strategies are modeled as a single
/// fused stage with compute divided across GPUs and the per-layer collective
/// cost added to every micro-step; pipeline parallelism partitions blocks
/// and pays one point-to-point hop per stage boundary.
pub fn sweep(
    grid: &SweepGrid,
    dev: &DeviceSpec,
    model: &ModelSpec,
) -> Result<Vec<SweepRow>, SimError> {
    let mut rows = Vec::new();
    for &gpus in &grid.gpu_counts {
        for &steps in &grid.step_counts {
            for &(height, width) in &grid.resolutions {
                for &strategy in &grid.strategies {
                    let shape = StreamShape {
                        batch_b: grid.batch_b,
                        chunk_frames_t: grid.chunk_frames,
                        height_h: height,
                        width_w: width,
                        denoise_steps_n: steps,
                        latent_channels_c: 16,
                    };
                    let effective = steps * grid.batch_b;
                    let profile = stage_profile_from_model(dev, model, &shape, effective);
                    let token_len =
                        shape.with_batch(1).tokens(model.pixel_to_token_ratio) as usize;
                    let pipe = match strategy {
                        CommStrategy::PipelineP2p => {
                            let partition = crate::balance::balance(&profile, gpus)
                                .map_err(|_| SimError::InvalidRun("partition infeasible"))?;
                            let comm = if gpus > 1 {
                                CommSpec::from_device(
                                    dev,
                                    costmodel::p2p_message_bytes(
                                        token_len,
                                        grid.hidden_dim,
                                        grid.dtype_bytes,
                                    ),
                                )
                            } else {
                                CommSpec::zero()
                            };
                            build_pipeline(&partition, &profile, gpus, &shape, comm)?
                        }
                        CommStrategy::UlyssesAllToAll | CommStrategy::RingKv => {
                            let dit: f64 = profile.block_times.iter().sum();
                            let comm_time = costmodel::comm_cost(
                                strategy,
                                token_len,
                                grid.hidden_dim,
                                grid.dtype_bytes,
                                dev,
                                model.num_blocks,
                                gpus,
                            );
                            let stage = dit / gpus as f64 + comm_time;
                            Pipeline::from_stage_times(
                                &[stage],
                                profile.vae_encode_time,
                                profile.vae_decode_time,
                                &shape,
                                CommSpec::zero(),
                            )?
                        }
                    };
                    let (report, _) =
                        run(&pipe, RunLength::Chunks(grid.chunks), grid.input_fps, None)?;
                    rows.push(SweepRow { gpus, steps, height, width, strategy, report });
                }
            }
        }
    }
    Ok(rows)
}
