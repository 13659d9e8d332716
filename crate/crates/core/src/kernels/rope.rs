//! Rotary positional embedding over even/odd channel pairs.

use super::tensor::{KernelError, Tensor};
use crate::fmath;

/// Rotate each token's channel pairs by its position.
///
/// `x` is `[seq, dim]` with even `dim`; pair `i` spans channels `(2i, 2i+1)`
/// and rotates by `pos * theta^(-2i/dim)`. `positions` gives the (possibly
/// wrapped) index per token.
pub fn rope_apply(x: &mut Tensor, positions: &[u64], theta: f64) -> Result<(), KernelError> {
    let [seq, dim] = *x.shape() else {
        return Err(KernelError::InvalidShape("rope expects a [seq, dim] tensor"));
    };
    if dim % 2 != 0 {
        return Err(KernelError::InvalidShape("rope needs an even channel count"));
    }
    if positions.len() != seq {
        return Err(KernelError::ShapeMismatch { expected: seq, got: positions.len() });
    }
    if !(theta > 0.0) {
        return Err(KernelError::InvalidShape("theta must be positive"));
    }
    let half = dim / 2;
    let data = x.data_mut();
    for (t, pos) in positions.iter().enumerate() {
        let row = &mut data[t * dim..(t + 1) * dim];
        for i in 0..half {
            let freq = fmath::powf(theta, -(2.0 * i as f64) / dim as f64);
            let (sin, cos) = fmath::sin_cos(*pos as f64 * freq);
            let a = row[2 * i] as f64;
            let b = row[2 * i + 1] as f64;
            row[2 * i] = (a * cos - b * sin) as f32;
            row[2 * i + 1] = (a * sin + b * cos) as f32;
        }
    }
    Ok(())
}
