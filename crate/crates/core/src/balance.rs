//! Contiguous min-max partitioning of DiT blocks across pipeline stages.
//!
//! VAE endpoint costs are charged to the first (encode) and last (decode)
//! stages. `balance` is exact at these block counts; `brute_force_partition`
//! is the enumeration oracle it is tested against.

use alloc::vec;
use alloc::vec::Vec;

/// Measured per-block execution times plus VAE endpoint charges.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockCostProfile {
    /// Seconds per DiT block, in pipeline order.
    pub block_times: Vec<f64>,
    /// Charged to the first stage.
    pub vae_encode_time: f64,
    /// Charged to the last stage.
    pub vae_decode_time: f64,
}

impl BlockCostProfile {
    pub fn validate(&self) -> Result<(), BalanceError> {
        if self.block_times.is_empty() {
            return Err(BalanceError::EmptyProfile);
        }
        if self.block_times.iter().any(|t| *t < 0.0)
            || self.vae_encode_time < 0.0
            || self.vae_decode_time < 0.0
        {
            return Err(BalanceError::NegativeTime);
        }
        Ok(())
    }

    pub fn num_blocks(&self) -> usize {
        self.block_times.len()
    }

    fn prefix_sums(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.block_times.len() + 1];
        for (i, t) in self.block_times.iter().enumerate() {
            p[i + 1] = p[i] + t;
        }
        p
    }

    /// Stage time of blocks [lo, hi) placed at `stage` of `stages_k`.
    fn stage_time(&self, prefix: &[f64], lo: usize, hi: usize, stage: usize, stages_k: usize) -> f64 {
        let mut t = prefix[hi] - prefix[lo];
        if stage == 0 {
            t += self.vae_encode_time;
        }
        if stage == stages_k - 1 {
            t += self.vae_decode_time;
        }
        t
    }
}

/// A contiguous block-to-stage assignment.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Partition {
    /// K-1 split indices; stage k covers blocks [boundaries[k-1], boundaries[k]).
    pub boundaries: Vec<usize>,
    /// Per-stage times including VAE endpoint charges.
    pub stage_times: Vec<f64>,
}

impl Partition {
    pub fn stages(&self) -> usize {
        self.stage_times.len()
    }

    pub fn max_stage_time(&self) -> f64 {
        self.stage_times.iter().cloned().fold(0.0, f64::max)
    }

    /// Stage ranges as (lo, hi) pairs over block indices.
    pub fn ranges(&self, num_blocks: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.boundaries.len() + 1);
        let mut lo = 0;
        for &b in &self.boundaries {
            out.push((lo, b));
            lo = b;
        }
        out.push((lo, num_blocks));
        out
    }

    fn from_boundaries(profile: &BlockCostProfile, boundaries: Vec<usize>, stages_k: usize) -> Self {
        let prefix = profile.prefix_sums();
        let n = profile.num_blocks();
        let mut stage_times = Vec::with_capacity(stages_k);
        let mut lo = 0;
        for k in 0..stages_k {
            let hi = if k + 1 < stages_k { boundaries[k] } else { n };
            stage_times.push(profile.stage_time(&prefix, lo, hi, k, stages_k));
            lo = hi;
        }
        Partition { boundaries, stage_times }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BalanceError {
    EmptyProfile,
    NegativeTime,
    /// More stages than blocks.
    Infeasible { blocks: usize, stages: usize },
    /// Instance too large for the enumeration oracle.
    TooLarge { blocks: usize, stages: usize },
    MismatchedBlockCount { expected: usize, got: usize },
}

impl core::fmt::Display for BalanceError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::EmptyProfile => write!(f, "block cost profile is empty"),
            Self::NegativeTime => write!(f, "block times must be nonnegative"),
            Self::Infeasible { blocks, stages } => {
                write!(f, "cannot split {blocks} blocks over {stages} stages")
            }
            Self::TooLarge { blocks, stages } => {
                write!(f, "instance {blocks} blocks x {stages} stages exceeds the oracle limit")
            }
            Self::MismatchedBlockCount { expected, got } => {
                write!(f, "measured profile has {got} blocks, partition expects {expected}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for BalanceError {}

/// Exact min-max optimum over all ways to split blocks [lo, n) into `k`
/// contiguous nonempty stages ending at absolute stage `stages_k`.
fn suffix_optimum(
    profile: &BlockCostProfile,
    prefix: &[f64],
    lo: usize,
    k: usize,
    stages_k: usize,
    memo: &mut [Vec<f64>],
) -> f64 {
    let n = profile.num_blocks();
    if memo[lo][k] >= 0.0 {
        return memo[lo][k];
    }
    let first_stage = stages_k - k;
    let v = if k == 1 {
        profile.stage_time(prefix, lo, n, stages_k - 1, stages_k)
    } else {
        let mut best = f64::INFINITY;
        // leave at least k-1 blocks for the remaining stages
        for hi in (lo + 1)..=(n - (k - 1)) {
            let head = profile.stage_time(prefix, lo, hi, first_stage, stages_k);
            if head >= best {
                continue;
            }
            let rest = suffix_optimum(profile, prefix, hi, k - 1, stages_k, memo);
            let m = head.max(rest);
            if m < best {
                best = m;
            }
        }
        best
    };
    memo[lo][k] = v;
    v
}

/// Min-max contiguous partition of the profile into `stages_k` stages.
///
/// Exact: the max stage time equals the enumeration oracle's. Ties are
/// resolved deterministically by re-optimizing each suffix and then giving
/// the current stage as many blocks as its suffix optimum allows, which
/// shifts work toward earlier stages (uniform 30 blocks over 4 stages
/// yields sizes 8, 8, 7, 7).
pub fn balance(profile: &BlockCostProfile, stages_k: usize) -> Result<Partition, BalanceError> {
    profile.validate()?;
    let n = profile.num_blocks();
    if stages_k < 1 || stages_k > n {
        return Err(BalanceError::Infeasible { blocks: n, stages: stages_k });
    }
    let prefix = profile.prefix_sums();
    let mut memo = vec![vec![-1.0; stages_k + 1]; n + 1];
    let mut boundaries = Vec::with_capacity(stages_k - 1);
    let mut lo = 0;
    for k_remaining in (2..=stages_k).rev() {
        let stage = stages_k - k_remaining;
        let target = suffix_optimum(profile, &prefix, lo, k_remaining, stages_k, &mut memo);
        // largest cut whose head stage still fits under the suffix optimum
        let mut cut = lo + 1;
        for hi in (lo + 1)..=(n - (k_remaining - 1)) {
            let head = profile.stage_time(&prefix, lo, hi, stage, stages_k);
            if head <= target {
                cut = hi;
            } else {
                break;
            }
        }
        boundaries.push(cut);
        lo = cut;
    }
    Ok(Partition::from_boundaries(profile, boundaries, stages_k))
}

/// Uniform contiguous split (the unbalanced baseline): early stages take
/// the remainder blocks, VAE endpoint charges still apply.
pub fn uniform_partition(
    profile: &BlockCostProfile,
    stages_k: usize,
) -> Result<Partition, BalanceError> {
    profile.validate()?;
    let n = profile.num_blocks();
    if stages_k < 1 || stages_k > n {
        return Err(BalanceError::Infeasible { blocks: n, stages: stages_k });
    }
    let base = n / stages_k;
    let rem = n % stages_k;
    let mut boundaries = Vec::with_capacity(stages_k - 1);
    let mut lo = 0;
    for k in 0..stages_k - 1 {
        lo += base + usize::from(k < rem);
        boundaries.push(lo);
    }
    Ok(Partition::from_boundaries(profile, boundaries, stages_k))
}

/// Enumeration oracle: every contiguous partition, global min-max optimum.
/// Limited to small instances; the first optimum in lexicographic boundary
/// order is returned.
pub fn brute_force_partition(
    profile: &BlockCostProfile,
    stages_k: usize,
) -> Result<Partition, BalanceError> {
    profile.validate()?;
    let n = profile.num_blocks();
    if stages_k < 1 || stages_k > n {
        return Err(BalanceError::Infeasible { blocks: n, stages: stages_k });
    }
    if n > 32 || stages_k > 6 {
        return Err(BalanceError::TooLarge { blocks: n, stages: stages_k });
    }
    let prefix = profile.prefix_sums();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut cuts = vec![0usize; stages_k - 1];
    enumerate(profile, &prefix, n, stages_k, 0, 0, &mut cuts, &mut best);
    let (_, boundaries) = best.expect("at least one partition exists");
    Ok(Partition::from_boundaries(profile, boundaries, stages_k))
}

fn enumerate(
    profile: &BlockCostProfile,
    prefix: &[f64],
    n: usize,
    stages_k: usize,
    depth: usize,
    lo: usize,
    cuts: &mut Vec<usize>,
    best: &mut Option<(f64, Vec<usize>)>,
) {
    if depth == stages_k - 1 {
        let mut max_t: f64 = 0.0;
        let mut start = 0;
        for k in 0..stages_k {
            let hi = if k + 1 < stages_k { cuts[k] } else { n };
            max_t = max_t.max(profile.stage_time(prefix, start, hi, k, stages_k));
            start = hi;
        }
        if best.as_ref().map_or(true, |(m, _)| max_t < *m) {
            *best = Some((max_t, cuts.clone()));
        }
        return;
    }
    let remaining = stages_k - 1 - depth;
    for hi in (lo + 1)..=(n - remaining) {
        cuts[depth] = hi;
        enumerate(profile, prefix, n, stages_k, depth + 1, hi, cuts, best);
    }
}

/// Online rebalancer: EMA-smooths measured block times and adopts a fresh
/// partition only when the predicted max-stage improvement clears the
/// hysteresis gate.
#[derive(Debug, Clone)]
pub struct OnlineRebalancer {
    smoothed: BlockCostProfile,
    /// EMA weight on the new measurement.
    pub ema_alpha: f64,
    /// Minimum relative improvement before switching partitions.
    pub hysteresis: f64,
}

pub const DEFAULT_EMA_ALPHA: f64 = 0.5;
pub const DEFAULT_HYSTERESIS: f64 = 0.05;

impl OnlineRebalancer {
    pub fn new(initial: BlockCostProfile) -> Self {
        Self { smoothed: initial, ema_alpha: DEFAULT_EMA_ALPHA, hysteresis: DEFAULT_HYSTERESIS }
    }

    pub fn smoothed(&self) -> &BlockCostProfile {
        &self.smoothed
    }

    /// Fold in a measurement and decide whether to adopt a new partition.
    pub fn rebalance(
        &mut self,
        current: &Partition,
        measured: &BlockCostProfile,
    ) -> Result<Partition, BalanceError> {
        measured.validate()?;
        if measured.num_blocks() != self.smoothed.num_blocks() {
            return Err(BalanceError::MismatchedBlockCount {
                expected: self.smoothed.num_blocks(),
                got: measured.num_blocks(),
            });
        }
        let a = self.ema_alpha;
        for (s, m) in self.smoothed.block_times.iter_mut().zip(&measured.block_times) {
            *s = a * m + (1.0 - a) * *s;
        }
        self.smoothed.vae_encode_time = a * measured.vae_encode_time + (1.0 - a) * self.smoothed.vae_encode_time;
        self.smoothed.vae_decode_time = a * measured.vae_decode_time + (1.0 - a) * self.smoothed.vae_decode_time;

        let stages_k = current.stages();
        let candidate = balance(&self.smoothed, stages_k)?;
        // evaluate the current boundaries under the smoothed profile
        let current_under_smoothed =
            Partition::from_boundaries(&self.smoothed, current.boundaries.clone(), stages_k);
        let old_max = current_under_smoothed.max_stage_time();
        let new_max = candidate.max_stage_time();
        if old_max > 0.0 && (old_max - new_max) / old_max > self.hysteresis {
            Ok(candidate)
        } else {
            Ok(current_under_smoothed)
        }
    }
}
