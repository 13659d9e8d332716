//! Dense row-major f32 tensor.

use crate::rng::SplitMix64;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelError {
    ShapeMismatch { expected: usize, got: usize },
    InvalidShape(&'static str),
}

impl core::fmt::Display for KernelError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::ShapeMismatch { expected, got } => {
                write!(f, "shape expects {expected} elements, got {got}")
            }
            Self::InvalidShape(msg) => write!(f, "invalid shape: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for KernelError {}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, KernelError> {
        if shape.is_empty() || shape.iter().any(|d| *d == 0) {
            return Err(KernelError::InvalidShape("dimensions must be positive"));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(KernelError::ShapeMismatch { expected: numel, got: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self, KernelError> {
        if shape.is_empty() || shape.iter().any(|d| *d == 0) {
            return Err(KernelError::InvalidShape("dimensions must be positive"));
        }
        let numel = shape.iter().product();
        Ok(Self { shape, data: vec![0.0; numel] })
    }

    /// Uniform values in (-amp, amp) from the seeded generator.
    pub fn random(shape: Vec<usize>, rng: &mut SplitMix64, amp: f64) -> Result<Self, KernelError> {
        let mut t = Self::zeros(shape)?;
        for v in &mut t.data {
            *v = (rng.next_centered() * amp) as f32;
        }
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Flat offset of a multi-index. Debug-asserts bounds.
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut off = 0;
        for (i, d) in index.iter().zip(&self.shape) {
            debug_assert!(i < d);
            off = off * d + i;
        }
        off
    }

    pub fn get(&self, index: &[usize]) -> f32 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f32) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    /// Largest absolute elementwise difference. Panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_layout() {
        let t = Tensor::new(vec![2, 3], (0..6).map(|i| i as f32).collect()).unwrap();
        assert_eq!(t.get(&[0, 0]), 0.0);
        assert_eq!(t.get(&[0, 2]), 2.0);
        assert_eq!(t.get(&[1, 0]), 3.0);
        assert_eq!(t.get(&[1, 2]), 5.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::zeros(vec![]).is_err());
    }

    #[test]
    fn seeded_random_is_reproducible() {
        let mut r1 = SplitMix64::new(42);
        let mut r2 = SplitMix64::new(42);
        let a = Tensor::random(vec![4, 4], &mut r1, 1.0).unwrap();
        let b = Tensor::random(vec![4, 4], &mut r2, 1.0).unwrap();
        assert_eq!(a, b);
    }
}
