//! Causal attention: full-sequence oracle and windowed streaming variant.

use super::tensor::{KernelError, Tensor};
use crate::fmath;
use alloc::vec;
use alloc::vec::Vec;

/// In-place softmax with max subtraction, f64 throughout.
pub fn softmax(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = fmath::exp(*s - max);
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}

/// Attention output for one query over an explicit key/value set.
pub fn attention_one(q: &[f32], keys: &[&[f32]], values: &[&[f32]], scale: f64) -> Vec<f32> {
    debug_assert!(!keys.is_empty());
    debug_assert_eq!(keys.len(), values.len());
    let mut scores: Vec<f64> = keys
        .iter()
        .map(|k| q.iter().zip(*k).map(|(a, b)| *a as f64 * *b as f64).sum::<f64>() * scale)
        .collect();
    softmax(&mut scores);
    let v_dim = values[0].len();
    let mut out = vec![0.0f64; v_dim];
    for (w, v) in scores.iter().zip(values) {
        for (o, x) in out.iter_mut().zip(*v) {
            *o += w * *x as f64;
        }
    }
    out.into_iter().map(|x| x as f32).collect()
}

fn rows(t: &Tensor) -> Vec<&[f32]> {
    let [seq, dim] = *t.shape() else { unreachable!() };
    (0..seq).map(|i| &t.data()[i * dim..(i + 1) * dim]).collect()
}

fn check_qkv(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<(usize, usize), KernelError> {
    let [seq, dim] = *q.shape() else {
        return Err(KernelError::InvalidShape("attention expects [seq, dim] tensors"));
    };
    if k.shape() != [seq, dim] || v.shape() != [seq, dim] {
        return Err(KernelError::ShapeMismatch { expected: seq * dim, got: k.numel() });
    }
    Ok((seq, dim))
}

/// Full causal attention oracle: query t attends to keys 0..=t.
pub fn attention_full(q: &Tensor, k: &Tensor, v: &Tensor, scale: f64) -> Result<Tensor, KernelError> {
    let (seq, dim) = check_qkv(q, k, v)?;
    let (qr, kr, vr) = (rows(q), rows(k), rows(v));
    let mut out = Vec::with_capacity(seq * dim);
    for t in 0..seq {
        out.extend(attention_one(qr[t], &kr[..=t], &vr[..=t], scale));
    }
    Tensor::new(vec![seq, dim], out)
}

/// Streaming attention: query t attends to the first `sink_count` positions
/// plus the trailing `window` positions up to t. With
/// `sink_count + window >= seq` this equals the full causal oracle.
pub fn attention_streaming(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    sink_count: usize,
    window: usize,
    scale: f64,
) -> Result<Tensor, KernelError> {
    let (seq, dim) = check_qkv(q, k, v)?;
    if window == 0 {
        return Err(KernelError::InvalidShape("window must be positive"));
    }
    let (qr, kr, vr) = (rows(q), rows(k), rows(v));
    let mut out = Vec::with_capacity(seq * dim);
    for t in 0..seq {
        let win_lo = (t + 1).saturating_sub(window).max(sink_count.min(t + 1));
        let mut keys: Vec<&[f32]> = Vec::new();
        let mut vals: Vec<&[f32]> = Vec::new();
        for i in 0..sink_count.min(win_lo) {
            keys.push(kr[i]);
            vals.push(vr[i]);
        }
        for i in win_lo..=t {
            keys.push(kr[i]);
            vals.push(vr[i]);
        }
        out.extend(attention_one(qr[t], &keys, &vals, scale));
    }
    Tensor::new(vec![seq, dim], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn qkv(seed: u64, seq: usize, dim: usize) -> (Tensor, Tensor, Tensor) {
        let mut rng = SplitMix64::new(seed);
        (
            Tensor::random(vec![seq, dim], &mut rng, 1.0).unwrap(),
            Tensor::random(vec![seq, dim], &mut rng, 1.0).unwrap(),
            Tensor::random(vec![seq, dim], &mut rng, 1.0).unwrap(),
        )
    }

    fn scale(dim: usize) -> f64 {
        1.0 / (dim as f64).sqrt()
    }

    #[test]
    fn first_row_copies_first_value() {
        let (q, k, v) = qkv(3, 6, 8);
        let out = attention_full(&q, &k, &v, scale(8)).unwrap();
        // query 0 can only attend to key 0, so softmax weight is exactly 1
        for c in 0..8 {
            assert!((out.get(&[0, c]) - v.get(&[0, c])).abs() < 1e-7);
        }
    }

    #[test]
    fn streaming_with_covering_window_matches_oracle() {
        for seed in 0..10 {
            let (q, k, v) = qkv(seed, 24, 16);
            let full = attention_full(&q, &k, &v, scale(16)).unwrap();
            let streamed = attention_streaming(&q, &k, &v, 2, 24, scale(16)).unwrap();
            let diff = full.max_abs_diff(&streamed);
            assert!(diff < 1e-5, "seed {seed}: max diff {diff}");
        }
    }

    #[test]
    fn short_window_differs_from_oracle() {
        let (q, k, v) = qkv(11, 32, 8);
        let full = attention_full(&q, &k, &v, scale(8)).unwrap();
        let streamed = attention_streaming(&q, &k, &v, 0, 4, scale(8)).unwrap();
        assert!(full.max_abs_diff(&streamed) > 1e-4);
    }

    #[test]
    fn shape_errors() {
        let (q, k, _) = qkv(0, 4, 8);
        let v_bad = Tensor::zeros(vec![4, 6]).unwrap();
        assert!(attention_full(&q, &k, &v_bad, 1.0).is_err());
        let (q, k, v) = qkv(0, 4, 8);
        assert!(attention_streaming(&q, &k, &v, 0, 0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(scores in proptest::collection::vec(-30.0f64..30.0, 1..64)) {
            let mut s = scores;
            softmax(&mut s);
            let sum: f64 = s.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12, "sum {sum}");
            prop_assert!(s.iter().all(|w| *w >= 0.0));
        }

        #[test]
        fn streaming_equals_oracle_when_window_covers(
            seed in any::<u64>(),
            seq in 2usize..20,
            sinks in 0usize..4,
        ) {
            let dim = 8;
            let (q, k, v) = qkv(seed, seq, dim);
            let full = attention_full(&q, &k, &v, scale(dim)).unwrap();
            let streamed = attention_streaming(&q, &k, &v, sinks, seq, scale(dim)).unwrap();
            prop_assert!(full.max_abs_diff(&streamed) < 1e-5);
        }

        // output of query t must not change when later rows change
        #[test]
        fn causality(seed in any::<u64>(), seq in 2usize..16) {
            let dim = 8;
            let (q, k, v) = qkv(seed, seq, dim);
            let out1 = attention_full(&q, &k, &v, scale(dim)).unwrap();
            let mut k2 = k.clone();
            let mut v2 = v.clone();
            for c in 0..dim {
                k2.set(&[seq - 1, c], 5.0);
                v2.set(&[seq - 1, c], -5.0);
            }
            let out2 = attention_full(&q, &k2, &v2, scale(dim)).unwrap();
            for t in 0..seq - 1 {
                for c in 0..dim {
                    prop_assert_eq!(out1.get(&[t, c]), out2.get(&[t, c]));
                }
            }
        }
    }
}
