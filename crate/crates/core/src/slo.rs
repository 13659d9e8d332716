//! SLO-aware selection and online adaptation of the stream batch size B.
//!
//! `select_batch` picks the throughput-maximizing feasible B from the cost
//! model; `AimdController` adapts B online against observed latency with a
//! multiplicative-decrease / additive-increase rule.

use crate::costmodel::{
    forward_roofline, latency_estimate, DeviceSpec, ModelSpec, Regime, StreamShape,
};
use alloc::format;
use alloc::string::String;

/// Service-level objective for one stream.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SloTarget {
    /// Target per-stream frame rate f_SLO, frames/s.
    pub target_fps: f64,
    /// Deadline per output frame, seconds.
    pub per_frame_deadline: f64,
    /// Time-to-first-frame budget, seconds.
    pub ttff_budget: f64,
}

impl SloTarget {
    /// A deadline at or above the frame interval leaves slack; flag it.
    pub fn is_lenient(&self) -> bool {
        self.per_frame_deadline >= 1.0 / self.target_fps
    }

    pub fn validate(&self) -> Result<(), SloError> {
        for (name, v) in [
            ("target_fps", self.target_fps),
            ("per_frame_deadline", self.per_frame_deadline),
            ("ttff_budget", self.ttff_budget),
        ] {
            if !(v > 0.0) {
                return Err(SloError::InvalidTarget(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Outcome of a batch-size decision.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BatchDecision {
    pub batch_b: usize,
    /// Predicted end-to-end chunk latency (all denoise steps), seconds.
    pub predicted_latency: f64,
    /// Predicted aggregate frame rate B*T / latency.
    pub predicted_fps: f64,
    pub regime: Regime,
    /// False when no batch size satisfies the SLO and B=1 was forced.
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SloError {
    /// Fewer frames buffered than one chunk needs.
    NotEnoughInput { buffered: usize, chunk_frames: usize },
    InvalidTarget(String),
}

impl core::fmt::Display for SloError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::NotEnoughInput { buffered, chunk_frames } => write!(
                f,
                "need at least one chunk of {chunk_frames} frames buffered, have {buffered}"
            ),
            Self::InvalidTarget(msg) => write!(f, "invalid SLO target: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SloError {}

/// Predicted latency of fully denoising one chunk batch: n sequential passes
/// of the Eq.-2-style forward latency at batch B.
pub fn chunk_latency(dev: &DeviceSpec, model: &ModelSpec, shape: &StreamShape) -> f64 {
    shape.denoise_steps_n as f64 * latency_estimate(dev, model, shape)
}

fn decision_for(dev: &DeviceSpec, model: &ModelSpec, shape: &StreamShape, feasible: bool) -> BatchDecision {
    let latency = chunk_latency(dev, model, shape);
    let frames = (shape.batch_b * shape.chunk_frames_t) as f64;
    BatchDecision {
        batch_b: shape.batch_b,
        predicted_latency: latency,
        predicted_fps: frames / latency,
        regime: forward_roofline(dev, model, shape).regime,
        feasible,
    }
}

/// Select the largest feasible stream batch size.
///
/// A candidate B is feasible when B*T frames are already buffered, the
/// per-stream rate T / L_chunk meets `target_fps`, and the chunk latency
/// stays within `per_frame_deadline * T`. Among feasible candidates the
/// modeled aggregate throughput is maximized, ties broken toward smaller B.
/// When nothing is feasible, B=1 is returned flagged infeasible.
pub fn select_batch(
    slo: &SloTarget,
    dev: &DeviceSpec,
    model: &ModelSpec,
    shape: &StreamShape,
    buffered_frames: usize,
    b_max: usize,
) -> Result<BatchDecision, SloError> {
    slo.validate()?;
    let t = shape.chunk_frames_t;
    if buffered_frames < t {
        return Err(SloError::NotEnoughInput { buffered: buffered_frames, chunk_frames: t });
    }
    let cap = b_max.min(buffered_frames / t).max(1);
    let mut best: Option<BatchDecision> = None;
    for b in 1..=cap {
        let candidate_shape = shape.with_batch(b);
        let d = decision_for(dev, model, &candidate_shape, true);
        let per_stream_rate = t as f64 / d.predicted_latency;
        let meets_rate = per_stream_rate >= slo.target_fps;
        let meets_deadline = d.predicted_latency <= slo.per_frame_deadline * t as f64;
        if meets_rate && meets_deadline {
            // strict > keeps the smallest B among equal-throughput candidates
            if best.map_or(true, |prev| d.predicted_fps > prev.predicted_fps) {
                best = Some(d);
            }
        }
    }
    Ok(best.unwrap_or_else(|| {
        let mut d = decision_for(dev, model, &shape.with_batch(1), false);
        d.feasible = false;
        d
    }))
}

/// AIMD batch-size controller: halve on SLO violation, add one after a
/// streak of compliant iterations.
#[derive(Debug, Clone)]
pub struct AimdController {
    chunk_frames: usize,
    b_max: usize,
    /// Compliant iterations required before an additive increase.
    streak_threshold: u32,
    streak: u32,
}

impl AimdController {
    pub fn new(chunk_frames: usize, b_max: usize, streak_threshold: u32) -> Self {
        Self { chunk_frames, b_max, streak_threshold: streak_threshold.max(1), streak: 0 }
    }

    /// Fold one latency observation into the batch decision.
    pub fn adapt(&mut self, prev: &BatchDecision, observed_latency: f64, slo: &SloTarget) -> BatchDecision {
        let t = self.chunk_frames as f64;
        let deadline = slo.per_frame_deadline * t;
        let violated = observed_latency > deadline;
        let (next_b, feasible) = if violated {
            self.streak = 0;
            if prev.batch_b <= 1 {
                (1, false)
            } else {
                (prev.batch_b / 2, true)
            }
        } else {
            self.streak += 1;
            if self.streak >= self.streak_threshold {
                self.streak = 0;
                ((prev.batch_b + 1).min(self.b_max), true)
            } else {
                (prev.batch_b, true)
            }
        };
        let next_b = next_b.max(1);
        BatchDecision {
            batch_b: next_b,
            predicted_latency: observed_latency,
            predicted_fps: next_b as f64 * t / observed_latency,
            regime: prev.regime,
            feasible,
        }
    }
}
