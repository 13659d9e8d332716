//! Synthetic latent streams with a controllable piecewise motion profile.
//! Each frame-to-frame delta is rescaled to hit the segment's target RMS
//! exactly, so controller tests see the motion they asked for.

use anyhow::{bail, Result};
use streamsim_core::motion::LatentFrame;
use streamsim_core::rng::SplitMix64;

/// One constant-motion segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionSegment {
    pub frames: usize,
    /// Target RMS frame difference for every step in the segment.
    pub intensity: f64,
}

/// Deterministic frames whose consecutive RMS differences realize the
/// profile. The first frame is the reference and counts toward the first
/// segment, so a profile of N frames yields N-1 transitions.
pub fn gen_stream(
    profile: &[MotionSegment],
    frame_len: usize,
    seed: u64,
) -> Result<Vec<LatentFrame>> {
    if profile.is_empty() || frame_len == 0 {
        bail!("profile and frame_len must be non-empty");
    }
    for seg in profile {
        if seg.frames == 0 || seg.intensity < 0.0 || !seg.intensity.is_finite() {
            bail!("segments need frames >= 1 and finite nonnegative intensity");
        }
    }
    let mut rng = SplitMix64::new(seed);
    let mut frames = Vec::new();
    let mut current: Vec<f32> = (0..frame_len).map(|_| rng.next_centered() as f32).collect();
    frames.push(LatentFrame::new(current.clone()));
    for seg in profile {
        let start = if frames.len() == 1 { 1 } else { 0 };
        for _ in start..seg.frames {
            let mut delta: Vec<f64> = (0..frame_len).map(|_| rng.next_centered()).collect();
            let rms = (delta.iter().map(|d| d * d).sum::<f64>() / frame_len as f64).sqrt();
            let scale = if rms > 0.0 { seg.intensity / rms } else { 0.0 };
            for d in &mut delta {
                *d *= scale;
            }
            current = current
                .iter()
                .zip(&delta)
                .map(|(c, d)| (*c as f64 + d) as f32)
                .collect();
            frames.push(LatentFrame::new(current.clone()));
        }
    }
    Ok(frames)
}
