//! Motion-adaptive noise-rate control.
//!
//! The controller watches frame-to-frame velocity in latent space and blends
//! a target noise rate toward fewer denoising steps for calm content and
//! more for rapid motion, smoothed by an EMA so the rate never jumps by more
//! than `lambda * (s_max - s_min)` per chunk.

use crate::fmath;
use alloc::vec::Vec;

/// One latent frame as a flat value vector.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LatentFrame {
    pub values: Vec<f32>,
}

impl LatentFrame {
    pub fn new(values: Vec<f32>) -> Self {
        Self { values }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MotionError {
    MismatchedLengths { a: usize, b: usize },
    EmptyFrame,
    InvalidConfig(&'static str),
}

impl core::fmt::Display for MotionError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::MismatchedLengths { a, b } => write!(f, "frame lengths differ: {a} vs {b}"),
            Self::EmptyFrame => write!(f, "latent frames must be non-empty"),
            Self::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MotionError {}

/// Root-mean-square frame difference, the raw motion signal.
pub fn motion_intensity(prev: &LatentFrame, cur: &LatentFrame) -> Result<f64, MotionError> {
    if prev.values.is_empty() {
        return Err(MotionError::EmptyFrame);
    }
    if prev.values.len() != cur.values.len() {
        return Err(MotionError::MismatchedLengths { a: prev.values.len(), b: cur.values.len() });
    }
    let mut acc = 0.0f64;
    for (a, b) in prev.values.iter().zip(&cur.values) {
        let d = *a as f64 - *b as f64;
        acc += d * d;
    }
    Ok(fmath::sqrt(acc / prev.values.len() as f64))
}

/// Sliding window of recent motion intensities with an adaptive
/// normalization scale tracking a high quantile of what it has seen.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionWindow {
    window: Vec<f64>,
    capacity: usize,
    /// Running high-quantile scale estimate; grows instantly, decays slowly.
    scale: f64,
}

pub const DEFAULT_WINDOW: usize = 8;

/// Scale decay per observation, so stale spikes stop dominating.
const SCALE_DECAY: f64 = 0.99;
const SCALE_FLOOR: f64 = 1e-12;

impl MotionWindow {
    pub fn new(capacity: usize) -> Result<Self, MotionError> {
        if capacity == 0 {
            return Err(MotionError::InvalidConfig("window capacity must be positive"));
        }
        Ok(Self { window: Vec::new(), capacity, scale: SCALE_FLOOR })
    }

    pub fn push(&mut self, intensity: f64) {
        let d = intensity.max(0.0);
        if self.window.len() == self.capacity {
            self.window.remove(0);
        }
        self.window.push(d);
        self.scale = (self.scale * SCALE_DECAY).max(d).max(SCALE_FLOOR);
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Peak intensity over the window, normalized by the running scale and
    /// clipped to [0, 1].
    pub fn normalized_motion(&self) -> f64 {
        let peak = self.window.iter().copied().fold(0.0f64, f64::max);
        (peak / self.scale).clamp(0.0, 1.0)
    }
}

/// EMA-smoothed noise rate with bounds.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseRateState {
    pub rate: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub lambda: f64,
}

pub const DEFAULT_S_MIN: f64 = 0.4;
pub const DEFAULT_S_MAX: f64 = 0.9;
pub const DEFAULT_LAMBDA: f64 = 0.4;

impl NoiseRateState {
    pub fn new(s_min: f64, s_max: f64, lambda: f64) -> Result<Self, MotionError> {
        if !(s_min.is_finite() && s_max.is_finite() && s_min >= 0.0 && s_max > s_min) {
            return Err(MotionError::InvalidConfig("need 0 <= s_min < s_max"));
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(MotionError::InvalidConfig("lambda must be in (0, 1]"));
        }
        Ok(Self { rate: s_max, s_min, s_max, lambda })
    }

    pub fn with_defaults() -> Self {
        Self::new(DEFAULT_S_MIN, DEFAULT_S_MAX, DEFAULT_LAMBDA).unwrap()
    }

    /// Blend toward the motion-implied target: high motion pulls the rate
    /// down to `s_min`, stillness lets it rise to `s_max`.
    pub fn update(&mut self, normalized_motion: f64) -> f64 {
        let d = normalized_motion.clamp(0.0, 1.0);
        let target = self.s_max - (self.s_max - self.s_min) * d;
        self.rate = self.lambda * target + (1.0 - self.lambda) * self.rate;
        self.rate = self.rate.clamp(self.s_min, self.s_max);
        self.rate
    }
}

/// Feed one new frame pair through window and EMA; returns the new rate.
pub fn update_noise_rate(
    window: &mut MotionWindow,
    state: &mut NoiseRateState,
    prev: &LatentFrame,
    cur: &LatentFrame,
) -> Result<f64, MotionError> {
    let d = motion_intensity(prev, cur)?;
    window.push(d);
    Ok(state.update(window.normalized_motion()))
}

/// Map a continuous noise rate onto a discrete timestep schedule.
///
/// `timesteps` must be strictly descending (denoising order). The entry
/// point is the timestep closest to `rate * timesteps[0]`, ties resolved
/// toward the shallower (smaller) timestep; the schedule is that entry and
/// everything after it.
pub fn schedule_for_rate(timesteps: &[f64], rate: f64) -> Result<Vec<f64>, MotionError> {
    if timesteps.is_empty() {
        return Err(MotionError::InvalidConfig("timestep schedule must be non-empty"));
    }
    for w in timesteps.windows(2) {
        if !(w[0] > w[1]) {
            return Err(MotionError::InvalidConfig("timesteps must be strictly descending"));
        }
    }
    let target = rate.clamp(0.0, 1.0) * timesteps[0];
    let mut best = 0usize;
    let mut best_dist = f64::INFINITY;
    for (i, ts) in timesteps.iter().enumerate() {
        let dist = (ts - target).abs();
        // <= prefers the later (shallower) timestep on ties
        if dist <= best_dist {
            best_dist = dist;
            best = i;
        }
    }
    Ok(timesteps[best..].to_vec())
}
