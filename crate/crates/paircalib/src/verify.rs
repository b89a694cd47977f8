//! Geometric verification of tentative correspondences by order consistency.
//!
//! Matched points should appear in the same left-right and down-up order in
//! both images. Finding the largest consistent subset reduces to a
//! longest-increasing-subsequence problem per axis; a threshold relaxes the
//! order test to `next >= prev - T`, and a recursion over y-split subregions
//! applies progressively tighter absolute thresholds to smaller regions.
//!
//! The relaxed relation is not transitive, so the classical greedy patience
//! piles are not exact for it; the solver below keeps the O(n log n) bound by
//! running the length DP with a Fenwick prefix-maximum over value ranks.

use crate::epipolar::CorrespondenceSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("alpha must be in [0, 1) and min_region positive")]
    InvalidConfig,
    #[error("ground-truth labels contain no positives")]
    NoPositiveLabels,
    #[error("labels are missing")]
    MissingLabels,
}

/// Parameters of the recursive verification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerificationConfig {
    /// Threshold coefficient: T = alpha * (extent of the matched points).
    pub alpha: f64,
    /// Recursion cutoff: regions shorter than this many pixels are leaves.
    pub min_region: f64,
}

impl VerificationConfig {
    pub fn new(alpha: f64, min_region: f64) -> Result<Self, VerifyError> {
        if !(0.0..1.0).contains(&alpha) || !(min_region > 0.0) {
            return Err(VerifyError::InvalidConfig);
        }
        Ok(Self { alpha, min_region })
    }
}

impl Default for VerificationConfig {
    fn default() -> Self {
        Self { alpha: 0.02, min_region: 200.0 }
    }
}

/// Sizes recorded at one recursion node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageRecord {
    pub depth: usize,
    pub input: usize,
    pub after_x: usize,
    pub after_y: usize,
    pub region: (f64, f64),
    pub leaf: bool,
}

/// Verified subset: indices into the input correspondence set, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifiedSubset {
    pub indices: Vec<usize>,
    pub stages: Vec<StageRecord>,
    /// Total Fenwick operations spent in LIS solves, for complexity checks.
    pub lis_ops: u64,
}

/// Maximum-length subsequence of `seq` in which every consecutive pair
/// satisfies `seq[i] - t <= seq[j]` (i before j). Returns ascending indices.
pub fn lis_thresholded(seq: &[f64], t: f64) -> Vec<usize> {
    lis_thresholded_with_ops(seq, t).0
}

/// As [`lis_thresholded`], also returning the number of Fenwick node visits.
pub fn lis_thresholded_with_ops(seq: &[f64], t: f64) -> (Vec<usize>, u64) {
    let n = seq.len();
    if n == 0 {
        return (Vec::new(), 0);
    }
    // value ranks
    let mut sorted: Vec<f64> = seq.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted.dedup();
    let rank = |v: f64| sorted.partition_point(|&s| s <= v);

    // Fenwick tree over ranks holding (best length, element index achieving it)
    let size = sorted.len() + 1;
    let mut tree: Vec<(usize, usize)> = vec![(0, usize::MAX); size];
    let mut ops = 0u64;

    let mut parent = vec![usize::MAX; n];
    let mut best_at = vec![0usize; n];
    let mut global_best = (0usize, usize::MAX);

    for (i, &v) in seq.iter().enumerate() {
        // best chain ending at a value <= v + t
        let bound = if t.is_infinite() { sorted.len() } else { rank(v + t) };
        let mut q: (usize, usize) = (0, usize::MAX);
        let mut node = bound;
        while node > 0 {
            ops += 1;
            if tree[node].0 > q.0 {
                q = tree[node];
            }
            node -= node & node.wrapping_neg();
        }
        let len = q.0 + 1;
        parent[i] = q.1;
        best_at[i] = len;
        if len > global_best.0 {
            global_best = (len, i);
        }
        // store at this element's own rank
        let mut node = rank(v);
        while node < size {
            ops += 1;
            if len > tree[node].0 {
                tree[node] = (len, i);
            }
            node += node & node.wrapping_neg();
        }
    }

    let mut chain = Vec::with_capacity(global_best.0);
    let mut at = global_best.1;
    while at != usize::MAX {
        chain.push(at);
        at = parent[at];
    }
    chain.reverse();
    debug_assert_eq!(chain.len(), global_best.0);
    (chain, ops)
}

/// Indices ordered by image-1 x (stable on ties), then the largest subset
/// whose image-2 x sequence is in relaxed increasing order.
pub fn consistent_x(corrs: &CorrespondenceSet, t: f64) -> Vec<usize> {
    consistent_axis(corrs, t, |c, i| c.pairs()[i].x1.x, |c, i| c.pairs()[i].x2.x).0
}

/// Same for the vertical axis.
pub fn consistent_y(corrs: &CorrespondenceSet, t: f64) -> Vec<usize> {
    consistent_axis(corrs, t, |c, i| c.pairs()[i].x1.y, |c, i| c.pairs()[i].x2.y).0
}

fn consistent_axis(
    corrs: &CorrespondenceSet,
    t: f64,
    key1: impl Fn(&CorrespondenceSet, usize) -> f64,
    key2: impl Fn(&CorrespondenceSet, usize) -> f64,
) -> (Vec<usize>, u64) {
    let mut order: Vec<usize> = (0..corrs.len()).collect();
    order.sort_by(|&a, &b| key1(corrs, a).total_cmp(&key1(corrs, b)).then(a.cmp(&b)));
    let seq: Vec<f64> = order.iter().map(|&i| key2(corrs, i)).collect();
    let (kept, ops) = lis_thresholded_with_ops(&seq, t);
    let mut indices: Vec<usize> = kept.into_iter().map(|pos| order[pos]).collect();
    indices.sort_unstable();
    (indices, ops)
}

/// Largest-x-consistent subset, then its largest y-consistent subset. The
/// combined relation is not an order, so this two-pass answer is the
/// approximation the recursion builds on.
pub fn consistent_xy(corrs: &CorrespondenceSet, tx: f64, ty: f64) -> Vec<usize> {
    consistent_xy_with_ops(corrs, tx, ty).0
}

fn consistent_xy_with_ops(corrs: &CorrespondenceSet, tx: f64, ty: f64) -> (Vec<usize>, usize, u64) {
    let (x_kept, ops_x) = consistent_axis(corrs, tx, |c, i| c.pairs()[i].x1.x, |c, i| c.pairs()[i].x2.x);
    let sub = corrs.subset(&x_kept);
    let (y_kept_local, ops_y) =
        consistent_axis(&sub, ty, |c, i| c.pairs()[i].x1.y, |c, i| c.pairs()[i].x2.y);
    let indices = y_kept_local.into_iter().map(|i| x_kept[i]).collect();
    (indices, x_kept.len(), ops_x + ops_y)
}

/// Recursive order-consistency verification.
///
/// Every node filters its correspondences with an x-then-y pass whose
/// thresholds are alpha times the extent of the node's matched points in
/// image 1 (y-extent for the x-pass, x-extent for the y-pass, mirroring the
/// observation that order flips concentrate between points far apart on the
/// other axis). Survivors are split at the median image-1 y into two
/// equal-count subregions until the region height drops under the cutoff;
/// odd counts place the extra point in the lower region.
pub fn recursive_verify(corrs: &CorrespondenceSet, cfg: &VerificationConfig) -> VerifiedSubset {
    if corrs.is_empty() {
        return VerifiedSubset { indices: Vec::new(), stages: Vec::new(), lis_ops: 0 };
    }
    let all: Vec<usize> = (0..corrs.len()).collect();
    let (y_lo, y_hi) = extent(corrs, |c| c.x1.y);
    let mut stages = Vec::new();
    let mut ops = 0u64;
    let mut indices = verify_node(corrs, all, (y_lo, y_hi), cfg, 0, &mut stages, &mut ops);
    indices.sort_unstable();
    VerifiedSubset { indices, stages, lis_ops: ops }
}

fn verify_node(
    corrs: &CorrespondenceSet,
    node: Vec<usize>,
    region: (f64, f64),
    cfg: &VerificationConfig,
    depth: usize,
    stages: &mut Vec<StageRecord>,
    ops: &mut u64,
) -> Vec<usize> {
    if node.is_empty() {
        return node;
    }
    let sub = corrs.subset(&node);
    let (y_min, y_max) = extent(&sub, |c| c.x1.y);
    let (x_min, x_max) = extent(&sub, |c| c.x1.x);
    let tx = cfg.alpha * (y_max - y_min);
    let ty = cfg.alpha * (x_max - x_min);
    let (kept_local, after_x, node_ops) = consistent_xy_with_ops(&sub, tx, ty);
    *ops += node_ops;
    let kept: Vec<usize> = kept_local.iter().map(|&i| node[i]).collect();

    let height = region.1 - region.0;
    let leaf = height < cfg.min_region || kept.len() <= 1;
    stages.push(StageRecord {
        depth,
        input: node.len(),
        after_x,
        after_y: kept.len(),
        region,
        leaf,
    });
    if leaf {
        return kept;
    }

    // median split by image-1 y, equal counts, extra point to the lower half
    let mut by_y: Vec<usize> = kept.clone();
    by_y.sort_by(|&a, &b| {
        corrs.pairs()[a]
            .x1
            .y
            .total_cmp(&corrs.pairs()[b].x1.y)
            .then(a.cmp(&b))
    });
    let split = by_y.len().div_ceil(2);
    let lower: Vec<usize> = by_y[..split].to_vec();
    let upper: Vec<usize> = by_y[split..].to_vec();
    let median_y = corrs.pairs()[by_y[split - 1]].x1.y;

    let mut result = verify_node(corrs, lower, (region.0, median_y), cfg, depth + 1, stages, ops);
    result.extend(verify_node(corrs, upper, (median_y, region.1), cfg, depth + 1, stages, ops));
    result
}

fn extent(corrs: &CorrespondenceSet, key: impl Fn(&crate::epipolar::Correspondence) -> f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in corrs.pairs() {
        let v = key(c);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Precision and recall of a predicted inlier index set against ground-truth
/// labels. Empty predictions have undefined precision (None) and zero recall.
pub fn verification_metrics(
    predicted: &[usize],
    labels: &[bool],
) -> Result<(Option<f64>, f64), VerifyError> {
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(VerifyError::NoPositiveLabels);
    }
    if predicted.is_empty() {
        return Ok((None, 0.0));
    }
    let tp = predicted.iter().filter(|&&i| labels[i]).count();
    Ok((
        Some(tp as f64 / predicted.len() as f64),
        tp as f64 / positives as f64,
    ))
}
