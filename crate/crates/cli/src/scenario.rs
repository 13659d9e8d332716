//! TOML scenario schema. Unknown fields and wrong schema versions are
//! rejected so configs fail loudly instead of silently drifting.

use serde::Deserialize;
use streamsim_core::costmodel::{fixtures, CommStrategy, DeviceSpec, ModelSpec, StreamShape};
use streamsim_core::slo::SloTarget;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub device: DeviceOverrides,
    #[serde(default)]
    pub model: ModelOverrides,
    pub stream: StreamCfg,
    #[serde(default)]
    pub pipeline: PipelineCfg,
    #[serde(default)]
    pub slo: Option<SloCfg>,
    pub run: RunCfg,
}

/// Partial overrides applied on top of the H100 fixture.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceOverrides {
    pub peak_flops: Option<f64>,
    pub hbm_bandwidth: Option<f64>,
    pub bandwidth_utilization_eta: Option<f64>,
    pub link_bandwidth: Option<f64>,
    pub link_latency: Option<f64>,
    pub avg_throughput: Option<f64>,
}

/// Partial overrides applied on top of the 1.3B model fixture.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    pub param_count: Option<f64>,
    pub bytes_per_param: Option<f64>,
    pub num_blocks: Option<usize>,
    pub per_block_flops_per_token: Option<f64>,
    pub per_block_bytes_per_token: Option<f64>,
    pub vae_encode_cost: Option<f64>,
    pub vae_decode_cost: Option<f64>,
    pub pixel_to_token_ratio: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamCfg {
    #[serde(default = "default_one")]
    pub batch: usize,
    #[serde(default = "default_chunk")]
    pub chunk_frames: usize,
    #[serde(default = "default_height")]
    pub height: usize,
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_one")]
    pub steps: usize,
    pub input_fps: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineCfg {
    #[serde(default = "default_one")]
    pub gpus: usize,
    #[serde(default)]
    pub strategy: Strategy,
    /// Partition DiT blocks with the min-max balancer; false keeps a
    /// uniform contiguous split.
    #[serde(default = "default_true")]
    pub auto_balance: bool,
    /// Keep steps*batch micro-steps in flight; false serves one chunk at a
    /// time.
    #[serde(default = "default_true")]
    pub stream_batch: bool,
    /// Explicit per-stage DiT seconds per micro-step, bypassing the cost
    /// model (used by calibrated presets).
    #[serde(default)]
    pub stage_times: Option<Vec<f64>>,
    /// Per-chunk VAE second overrides.
    #[serde(default)]
    pub vae_encode: Option<f64>,
    #[serde(default)]
    pub vae_decode: Option<f64>,
}

impl Default for PipelineCfg {
    fn default() -> Self {
        Self {
            gpus: 1,
            strategy: Strategy::default(),
            auto_balance: true,
            stream_batch: true,
            stage_times: None,
            vae_encode: None,
            vae_decode: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    PipelineP2p,
    Ulysses,
    RingKv,
}

impl From<Strategy> for CommStrategy {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::PipelineP2p => CommStrategy::PipelineP2p,
            Strategy::Ulysses => CommStrategy::UlyssesAllToAll,
            Strategy::RingKv => CommStrategy::RingKv,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SloCfg {
    pub target_fps: f64,
    pub per_frame_deadline: f64,
    pub ttff_budget: f64,
}

impl From<&SloCfg> for SloTarget {
    fn from(c: &SloCfg) -> Self {
        SloTarget {
            target_fps: c.target_fps,
            per_frame_deadline: c.per_frame_deadline,
            ttff_budget: c.ttff_budget,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunCfg {
    #[serde(default)]
    pub chunks: Option<usize>,
    #[serde(default)]
    pub seconds: Option<f64>,
}

fn default_one() -> usize {
    1
}
fn default_chunk() -> usize {
    4
}
fn default_height() -> usize {
    480
}
fn default_width() -> usize {
    832
}
fn default_true() -> bool {
    true
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, String> {
        let sc: Scenario = toml::from_str(text).map_err(|e| e.to_string())?;
        sc.validate()?;
        Ok(sc)
    }

    fn validate(&self) -> Result<(), String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.name.is_empty() {
            return Err("name must be non-empty".into());
        }
        match (self.run.chunks, self.run.seconds) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err("run must set exactly one of chunks or seconds".into()),
        }
        if self.stream.batch == 0 || self.stream.steps == 0 || self.stream.chunk_frames == 0 {
            return Err("stream batch, steps, and chunk_frames must be positive".into());
        }
        if self.pipeline.gpus == 0 {
            return Err("pipeline.gpus must be positive".into());
        }
        if let Some(times) = &self.pipeline.stage_times {
            if times.len() != self.pipeline.gpus {
                return Err(format!(
                    "stage_times has {} entries for {} gpus",
                    times.len(),
                    self.pipeline.gpus
                ));
            }
        }
        Ok(())
    }

    pub fn device(&self) -> DeviceSpec {
        let mut d = fixtures::h100();
        let o = &self.device;
        if let Some(v) = o.peak_flops {
            d.peak_flops = v;
        }
        if let Some(v) = o.hbm_bandwidth {
            d.hbm_bandwidth = v;
        }
        if let Some(v) = o.bandwidth_utilization_eta {
            d.bandwidth_utilization_eta = v;
        }
        if let Some(v) = o.link_bandwidth {
            d.link_bandwidth = v;
        }
        if let Some(v) = o.link_latency {
            d.link_latency = v;
        }
        if let Some(v) = o.avg_throughput {
            d.avg_throughput = v;
        }
        d
    }

    pub fn model(&self) -> ModelSpec {
        let mut m = fixtures::model_1p3b();
        let o = &self.model;
        if let Some(v) = o.param_count {
            m.param_count = v;
        }
        if let Some(v) = o.bytes_per_param {
            m.bytes_per_param = v;
        }
        if let Some(v) = o.num_blocks {
            m.num_blocks = v;
        }
        if let Some(v) = o.per_block_flops_per_token {
            m.per_block_flops_per_token = v;
        }
        if let Some(v) = o.per_block_bytes_per_token {
            m.per_block_bytes_per_token = v;
        }
        if let Some(v) = o.vae_encode_cost {
            m.vae_encode_cost = v;
        }
        if let Some(v) = o.vae_decode_cost {
            m.vae_decode_cost = v;
        }
        if let Some(v) = o.pixel_to_token_ratio {
            m.pixel_to_token_ratio = v;
        }
        m
    }

    pub fn shape(&self) -> StreamShape {
        StreamShape {
            batch_b: self.stream.batch,
            chunk_frames_t: self.stream.chunk_frames,
            height_h: self.stream.height,
            width_w: self.stream.width,
            denoise_steps_n: self.stream.steps,
            latent_channels_c: 16,
        }
    }
}
