//! Long-horizon context controls: pinned attention sinks with staleness
//! refresh, periodic positional index reset, and a rolling KV cache that
//! never evicts sink entries.

use crate::fmath;
use alloc::collections::VecDeque;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub enum ContextError {
    MismatchedDims { expected: usize, got: usize },
    InvalidConfig(&'static str),
}

impl core::fmt::Display for ContextError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::MismatchedDims { expected, got } => {
                write!(f, "embedding dim mismatch: expected {expected}, got {got}")
            }
            Self::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ContextError {}

fn cosine_similarity(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        dot += *x as f64 * *y as f64;
        na += (*x as f64) * (*x as f64);
        nb += (*y as f64) * (*y as f64);
    }
    let denom = fmath::sqrt(na) * fmath::sqrt(nb);
    if denom == 0.0 {
        0.0
    } else {
        dot / denom
    }
}

/// Fixed-size set of anchor embeddings. A sink is replaced by the current
/// context summary once it drifts too far from it, keeping the anchors
/// relevant without ever dropping below `m` of them.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkSet {
    sinks: Vec<Vec<f32>>,
    dim: usize,
    /// Minimum cosine similarity before a sink is considered stale.
    pub tau: f64,
}

pub const DEFAULT_TAU: f64 = 0.95;
pub const DEFAULT_SINK_COUNT: usize = 4;

impl SinkSet {
    pub fn new(sinks: Vec<Vec<f32>>, tau: f64) -> Result<Self, ContextError> {
        if sinks.is_empty() {
            return Err(ContextError::InvalidConfig("need at least one sink"));
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(ContextError::InvalidConfig("tau must be in [0, 1]"));
        }
        let dim = sinks[0].len();
        if dim == 0 {
            return Err(ContextError::InvalidConfig("sink embeddings must be non-empty"));
        }
        for s in &sinks {
            if s.len() != dim {
                return Err(ContextError::MismatchedDims { expected: dim, got: s.len() });
            }
        }
        Ok(Self { sinks, dim, tau })
    }

    pub fn len(&self) -> usize {
        self.sinks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sinks.is_empty()
    }

    pub fn sinks(&self) -> &[Vec<f32>] {
        &self.sinks
    }

    /// Replace every sink whose similarity to `summary` fell below tau.
    /// Returns the indices that were refreshed. Idempotent: a second call
    /// with the same summary refreshes nothing.
    pub fn refresh(&mut self, summary: &[f32]) -> Result<Vec<usize>, ContextError> {
        if summary.len() != self.dim {
            return Err(ContextError::MismatchedDims { expected: self.dim, got: summary.len() });
        }
        let mut replaced = Vec::new();
        for (i, sink) in self.sinks.iter_mut().enumerate() {
            if cosine_similarity(sink, summary) < self.tau {
                sink.copy_from_slice(summary);
                replaced.push(i);
            }
        }
        Ok(replaced)
    }
}

/// Positional index with periodic reset.
///
/// Frame 0 is the reference image; generated frames count from 1. Once the
/// raw index would pass `t_reset`, positions wrap back into `[1, t_reset]`
/// so the relative distance to the reference stays bounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RopeState {
    pub t_reset: u64,
}

impl RopeState {
    pub fn new(t_reset: u64) -> Result<Self, ContextError> {
        if t_reset == 0 {
            return Err(ContextError::InvalidConfig("t_reset must be positive"));
        }
        Ok(Self { t_reset })
    }

    pub fn position(&self, t: u64) -> u64 {
        rope_position(t, self.t_reset)
    }
}

/// See [`RopeState::position`]. `t = 0` maps to 0; `t` in `[1, t_reset]`
/// maps to itself; beyond that it wraps into `[1, t_reset]`.
pub fn rope_position(t: u64, t_reset: u64) -> u64 {
    if t <= t_reset {
        t
    } else {
        (t - 1) % t_reset + 1
    }
}

/// One cached key/value entry.
#[derive(Debug, Clone, PartialEq)]
pub struct KvEntry {
    pub key: Vec<f32>,
    pub value: Vec<f32>,
    /// Raw (unwrapped) frame index this entry came from.
    pub frame: u64,
}

/// Bounded KV cache with a pinned sink prefix. Non-sink entries roll:
/// the oldest is evicted once the cache is full. Sinks are never evicted.
#[derive(Debug, Clone, PartialEq)]
pub struct RollingKvCache {
    sinks: Vec<KvEntry>,
    ring: VecDeque<KvEntry>,
    capacity: usize,
}

impl RollingKvCache {
    /// `capacity` bounds the total entry count, sinks included.
    pub fn new(capacity: usize, sinks: Vec<KvEntry>) -> Result<Self, ContextError> {
        if capacity == 0 {
            return Err(ContextError::InvalidConfig("capacity must be positive"));
        }
        if sinks.len() >= capacity {
            return Err(ContextError::InvalidConfig("sinks must leave room for rolling entries"));
        }
        Ok(Self { ring: VecDeque::new(), capacity, sinks })
    }

    pub fn len(&self) -> usize {
        self.sinks.len() + self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn sink_count(&self) -> usize {
        self.sinks.len()
    }

    /// Append one entry, evicting the oldest non-sink entry if full.
    /// Returns the evicted entry, if any.
    pub fn kv_append(&mut self, entry: KvEntry) -> Option<KvEntry> {
        let evicted = if self.len() == self.capacity { self.ring.pop_front() } else { None };
        self.ring.push_back(entry);
        evicted
    }

    /// Attention window in order: sinks first, then rolling entries oldest
    /// to newest.
    pub fn kv_window(&self) -> Vec<&KvEntry> {
        self.sinks.iter().chain(self.ring.iter()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn entry(frame: u64) -> KvEntry {
        KvEntry { key: vec![frame as f32], value: vec![-(frame as f32)], frame }
    }

    #[test]
    fn rope_identity_below_reset() {
        for t in 0..=32 {
            assert_eq!(rope_position(t, 32), t);
        }
    }

    #[test]
    fn rope_wraps_past_reset() {
        let t_reset = 32;
        assert_eq!(rope_position(t_reset + 5, t_reset), 5);
        assert_eq!(rope_position(3 * t_reset + 2, t_reset), 2);
        assert_eq!(rope_position(2 * t_reset, t_reset), t_reset);
    }

    #[test]
    fn rope_rejects_zero_period() {
        assert!(RopeState::new(0).is_err());
        assert_eq!(RopeState::new(16).unwrap().position(21), 5);
    }

    #[test]
    fn sink_refresh_replaces_only_stale() {
        let aligned = vec![1.0, 0.0, 0.0];
        let drifted = vec![0.0, 1.0, 0.0];
        let mut sinks = SinkSet::new(vec![aligned.clone(), drifted], DEFAULT_TAU).unwrap();
        let replaced = sinks.refresh(&aligned).unwrap();
        assert_eq!(replaced, vec![1]);
        assert_eq!(sinks.sinks()[0], aligned);
        assert_eq!(sinks.sinks()[1], aligned);
    }

    #[test]
    fn sink_refresh_is_idempotent() {
        let mut sinks = SinkSet::new(
            vec![vec![1.0, 0.0], vec![0.6, 0.8], vec![0.0, 1.0], vec![-1.0, 0.0]],
            DEFAULT_TAU,
        )
        .unwrap();
        let summary = vec![0.3, 0.7];
        let first = sinks.refresh(&summary).unwrap();
        assert!(!first.is_empty());
        let second = sinks.refresh(&summary).unwrap();
        assert!(second.is_empty(), "second refresh replaced {second:?}");
    }

    #[test]
    fn sink_refresh_checks_dims() {
        let mut sinks = SinkSet::new(vec![vec![1.0, 0.0]], DEFAULT_TAU).unwrap();
        assert!(matches!(
            sinks.refresh(&[1.0, 0.0, 0.0]),
            Err(ContextError::MismatchedDims { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn sink_count_never_changes() {
        let mut sinks = SinkSet::new(vec![vec![1.0, 0.0]; DEFAULT_SINK_COUNT], 0.99).unwrap();
        for i in 0..50 {
            let angle = i as f32 * 0.37;
            let _ = sinks.refresh(&[angle.cos(), angle.sin()]).unwrap();
            assert_eq!(sinks.len(), DEFAULT_SINK_COUNT);
        }
    }

    // capacity 8 with 2 sinks: after appending frames 1..=10 the window must
    // be [sink0, sink1, 5, 6, 7, 8, 9, 10]
    #[test]
    fn rolling_window_replay() {
        let mut cache =
            RollingKvCache::new(8, vec![entry(1000), entry(1001)]).unwrap();
        for f in 1..=10 {
            cache.kv_append(entry(f));
        }
        let frames: Vec<u64> = cache.kv_window().iter().map(|e| e.frame).collect();
        assert_eq!(frames, vec![1000, 1001, 5, 6, 7, 8, 9, 10]);
        assert_eq!(cache.len(), 8);
    }

    #[test]
    fn eviction_is_oldest_first_and_reported() {
        let mut cache = RollingKvCache::new(4, vec![entry(99)]).unwrap();
        assert_eq!(cache.kv_append(entry(1)), None);
        assert_eq!(cache.kv_append(entry(2)), None);
        assert_eq!(cache.kv_append(entry(3)), None);
        let evicted = cache.kv_append(entry(4)).unwrap();
        assert_eq!(evicted.frame, 1);
        let evicted = cache.kv_append(entry(5)).unwrap();
        assert_eq!(evicted.frame, 2);
    }

    #[test]
    fn sinks_never_evicted() {
        let mut cache = RollingKvCache::new(4, vec![entry(500), entry(501)]).unwrap();
        for f in 0..100 {
            if let Some(e) = cache.kv_append(entry(f)) {
                assert!(e.frame < 500, "sink {e:?} was evicted");
            }
            assert_eq!(cache.sink_count(), 2);
            assert!(cache.len() <= 4);
        }
        let frames: Vec<u64> = cache.kv_window().iter().map(|e| e.frame).collect();
        assert_eq!(frames, vec![500, 501, 98, 99]);
    }

    #[test]
    fn cache_rejects_degenerate_configs() {
        assert!(RollingKvCache::new(0, vec![]).is_err());
        assert!(RollingKvCache::new(2, vec![entry(0), entry(1)]).is_err());
    }

    proptest! {
        #[test]
        fn rope_position_always_bounded(t in 0u64..1_000_000, t_reset in 1u64..10_000) {
            let p = rope_position(t, t_reset);
            prop_assert!(p <= t_reset);
            prop_assert!(t == 0 || p >= 1);
            // wrapped positions agree with the raw index modulo the period
            if t > 0 {
                prop_assert_eq!((p - 1) % t_reset, (t - 1) % t_reset);
            }
        }

        #[test]
        fn cache_window_is_suffix_of_appends(
            capacity in 3usize..32,
            sink_count in 1usize..2,
            appends in 1usize..200,
        ) {
            prop_assume!(sink_count < capacity);
            let sinks: Vec<KvEntry> = (0..sink_count).map(|i| entry(10_000 + i as u64)).collect();
            let mut cache = RollingKvCache::new(capacity, sinks).unwrap();
            for f in 0..appends as u64 {
                cache.kv_append(entry(f));
            }
            let frames: Vec<u64> = cache.kv_window().iter().map(|e| e.frame).collect();
            let roll = capacity - sink_count;
            let kept = appends.min(roll);
            // prefix: sinks in order
            for (i, f) in frames[..sink_count].iter().enumerate() {
                prop_assert_eq!(*f, 10_000 + i as u64);
            }
            // suffix: the last `kept` appended frames in order
            let expect: Vec<u64> = ((appends - kept) as u64..appends as u64).collect();
            prop_assert_eq!(&frames[sink_count..], &expect[..]);
        }
    }
}
