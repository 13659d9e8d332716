//! Causal 3D convolution: full-sequence oracle and chunked streaming form
//! that carries the last `kt - 1` input frames between chunks.

use super::tensor::{KernelError, Tensor};
use crate::rng::SplitMix64;
use alloc::vec;
use alloc::vec::Vec;

/// Convolution weights: `[c_out, c_in, kt, kh, kw]` plus per-channel bias.
/// Temporally causal (pads `kt - 1` frames of zeros before the sequence),
/// spatially zero-padded to keep height and width.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3d {
    weight: Tensor,
    bias: Vec<f32>,
}

impl Conv3d {
    pub fn new(weight: Tensor, bias: Vec<f32>) -> Result<Self, KernelError> {
        let [c_out, _, _, kh, kw] = *weight.shape() else {
            return Err(KernelError::InvalidShape("weight must be [c_out, c_in, kt, kh, kw]"));
        };
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(KernelError::InvalidShape("spatial kernel sides must be odd"));
        }
        if bias.len() != c_out {
            return Err(KernelError::ShapeMismatch { expected: c_out, got: bias.len() });
        }
        Ok(Self { weight, bias })
    }

    pub fn random(
        c_in: usize,
        c_out: usize,
        kt: usize,
        kh: usize,
        kw: usize,
        rng: &mut SplitMix64,
    ) -> Result<Self, KernelError> {
        let fan_in = (c_in * kt * kh * kw) as f64;
        let amp = 1.0 / crate::fmath::sqrt(fan_in);
        let weight = Tensor::random(vec![c_out, c_in, kt, kh, kw], rng, amp)?;
        let bias = (0..c_out).map(|_| (rng.next_centered() * amp) as f32).collect();
        Self::new(weight, bias)
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn kt(&self) -> usize {
        self.weight.shape()[2]
    }

    fn c_in(&self) -> usize {
        self.weight.shape()[1]
    }

    fn c_out(&self) -> usize {
        self.weight.shape()[0]
    }

    /// One output frame. `history` holds input frames ending at the current
    /// one: `history[history.len() - 1]` is frame t, earlier entries are
    /// t-1, t-2, ... Missing history reads as zeros (causal padding).
    fn output_frame(&self, history: &[&Tensor]) -> Tensor {
        let [c_out, c_in, kt, kh, kw] = *self.weight.shape() else { unreachable!() };
        let [_, h, w] = *history[history.len() - 1].shape() else { unreachable!() };
        let mut out = Tensor::zeros(vec![c_out, h, w]).unwrap();
        for co in 0..c_out {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = self.bias[co] as f64;
                    for dt in 0..kt {
                        // dt = 0 is the oldest tap, kt - 1 the current frame
                        let age = kt - 1 - dt;
                        if age + 1 > history.len() {
                            continue;
                        }
                        let frame = history[history.len() - 1 - age];
                        for ci in 0..c_in {
                            for dy in 0..kh {
                                let yy = y as isize + dy as isize - (kh / 2) as isize;
                                if yy < 0 || yy >= h as isize {
                                    continue;
                                }
                                for dx in 0..kw {
                                    let xx = x as isize + dx as isize - (kw / 2) as isize;
                                    if xx < 0 || xx >= w as isize {
                                        continue;
                                    }
                                    let wv =
                                        self.weight.get(&[co, ci, dt, dy, dx]) as f64;
                                    let iv =
                                        frame.get(&[ci, yy as usize, xx as usize]) as f64;
                                    acc += wv * iv;
                                }
                            }
                        }
                    }
                    out.set(&[co, y, x], acc as f32);
                }
            }
        }
        out
    }

    fn check_input(&self, input: &Tensor) -> Result<(usize, usize, usize), KernelError> {
        let [_, c_in, h, w] = *input.shape() else {
            return Err(KernelError::InvalidShape("input must be [t, c_in, h, w]"));
        };
        if c_in != self.c_in() {
            return Err(KernelError::ShapeMismatch { expected: self.c_in(), got: c_in });
        }
        Ok((input.shape()[0], h, w))
    }
}

fn frame_of(input: &Tensor, t: usize) -> Tensor {
    let [_, c, h, w] = *input.shape() else { unreachable!() };
    let stride = c * h * w;
    Tensor::new(vec![c, h, w], input.data()[t * stride..(t + 1) * stride].to_vec()).unwrap()
}

/// Full-sequence oracle over an `[t, c_in, h, w]` input.
pub fn conv3d_full(conv: &Conv3d, input: &Tensor) -> Result<Tensor, KernelError> {
    let (t_len, h, w) = conv.check_input(input)?;
    let frames: Vec<Tensor> = (0..t_len).map(|t| frame_of(input, t)).collect();
    let mut out = Vec::with_capacity(t_len * conv.c_out() * h * w);
    for t in 0..t_len {
        let lo = (t + 1).saturating_sub(conv.kt());
        let history: Vec<&Tensor> = frames[lo..=t].iter().collect();
        out.extend_from_slice(conv.output_frame(&history).data());
    }
    Tensor::new(vec![t_len, conv.c_out(), h, w], out)
}

/// Chunked evaluation with a rolling cache of the raw input frames still
/// needed by the temporal taps. Feeding arbitrary chunk splits reproduces
/// [`conv3d_full`] exactly.
#[derive(Debug, Clone)]
pub struct StreamingConv3d {
    conv: Conv3d,
    cache: Vec<Tensor>,
}

impl StreamingConv3d {
    pub fn new(conv: Conv3d) -> Self {
        Self { conv, cache: Vec::new() }
    }

    pub fn reset(&mut self) {
        self.cache.clear();
    }

    pub fn cached_frames(&self) -> usize {
        self.cache.len()
    }

    /// Process the next chunk of frames, in order.
    pub fn push_chunk(&mut self, chunk: &Tensor) -> Result<Tensor, KernelError> {
        let (t_len, h, w) = self.conv.check_input(chunk)?;
        let mut out = Vec::with_capacity(t_len * self.conv.c_out() * h * w);
        for t in 0..t_len {
            let frame = frame_of(chunk, t);
            self.cache.push(frame);
            let keep = self.conv.kt();
            if self.cache.len() > keep {
                self.cache.remove(0);
            }
            let history: Vec<&Tensor> = self.cache.iter().collect();
            out.extend_from_slice(self.conv.output_frame(&history).data());
        }
        Tensor::new(vec![t_len, self.conv.c_out(), h, w], out)
    }
}
