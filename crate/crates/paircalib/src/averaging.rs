//! Consolidation of pairwise estimates: Weiszfeld L1 rotation averaging
//! (single rotation and whole-graph registration) and confidence-count based
//! focal-length selection.

use crate::geometry::RotationMatrix;
use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AveragingError {
    #[error("empty input")]
    EmptyInput,
    #[error("rotation graph is not connected")]
    DisconnectedGraph,
    #[error("no focal estimates for image {0}")]
    EmptyPool(usize),
}

/// Rotation vector of R (axis times angle, radians). Accurate near zero.
fn log_so3(r: &Matrix3<f64>) -> Vector3<f64> {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r)).scaled_axis()
}

fn exp_so3(w: &Vector3<f64>) -> Matrix3<f64> {
    UnitQuaternion::from_scaled_axis(*w).to_rotation_matrix().into_inner()
}

/// Geodesic distance: the rotation angle of R S^-1, in degrees, in [0, 180].
pub fn geodesic_distance(r: &RotationMatrix, s: &RotationMatrix) -> f64 {
    geodesic_distance_raw(r.matrix(), s.matrix())
}

pub(crate) fn geodesic_distance_raw(r: &Matrix3<f64>, s: &Matrix3<f64>) -> f64 {
    let rel = r * s.transpose();
    // atan2 of the axial (sine) and trace (cosine) parts stays accurate for
    // tiny angles where acos((tr-1)/2) loses all resolution.
    let v = Vector3::new(
        rel[(2, 1)] - rel[(1, 2)],
        rel[(0, 2)] - rel[(2, 0)],
        rel[(1, 0)] - rel[(0, 1)],
    ) * 0.5;
    let cos = (rel.trace() - 1.0) * 0.5;
    v.norm().atan2(cos).to_degrees()
}

/// L1 (geodesic median) average of a set of rotations by the Weiszfeld
/// iteration in the tangent space, with the standard damping that keeps the
/// step well defined when the iterate coincides with input rotations.
///
/// `tol_deg` bounds the final step size in degrees.
pub fn weiszfeld_single(
    rotations: &[RotationMatrix],
    max_iters: usize,
    tol_deg: f64,
) -> Result<RotationMatrix, AveragingError> {
    if rotations.is_empty() {
        return Err(AveragingError::EmptyInput);
    }
    if rotations.len() == 1 {
        return Ok(rotations[0].clone());
    }
    // medoid start: input with the least summed distance to the others
    let mut best = (f64::INFINITY, 0usize);
    for (i, r) in rotations.iter().enumerate() {
        let sum: f64 = rotations.iter().map(|s| geodesic_distance(r, s)).sum();
        if sum < best.0 {
            best = (sum, i);
        }
    }
    let mut current = rotations[best.1].matrix().clone_owned();
    for _ in 0..max_iters {
        match weiszfeld_step(&current, rotations) {
            Some(step) => {
                current = exp_so3(&step) * current;
                if step.norm().to_degrees() < tol_deg {
                    break;
                }
            }
            None => break, // current is the median
        }
    }
    Ok(RotationMatrix::project(&current).expect("projected rotation"))
}

/// One damped Weiszfeld step at `current`; None when `current` already
/// satisfies the median optimality condition.
fn weiszfeld_step(current: &Matrix3<f64>, rotations: &[RotationMatrix]) -> Option<Vector3<f64>> {
    const COINCIDENT: f64 = 1e-12;
    let mut coincident = 0.0f64;
    let mut grad = Vector3::zeros();
    let mut weighted = Vector3::zeros();
    let mut weight_sum = 0.0f64;
    for r in rotations {
        let delta = log_so3(&(r.matrix() * current.transpose()));
        let d = delta.norm();
        if d < COINCIDENT {
            coincident += 1.0;
        } else {
            grad += delta / d;
            weighted += delta / d;
            weight_sum += 1.0 / d;
        }
    }
    if weight_sum == 0.0 {
        return None; // all inputs coincide with the iterate
    }
    let gnorm = grad.norm();
    if coincident > 0.0 && gnorm <= coincident {
        return None; // anchored median at a data point
    }
    let mut step = weighted / weight_sum;
    if coincident > 0.0 {
        step *= 1.0 - coincident / gnorm;
    }
    Some(step)
}

/// Relative-rotation graph: an edge (i, j, R_ij) encodes R_j = R_ij R_i.
#[derive(Debug, Clone, Default)]
pub struct RotationGraph {
    nodes: BTreeSet<usize>,
    edges: Vec<(usize, usize, RotationMatrix)>,
}

impl RotationGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: usize) {
        self.nodes.insert(id);
    }

    pub fn add_edge(&mut self, i: usize, j: usize, r_ij: RotationMatrix) {
        self.nodes.insert(i);
        self.nodes.insert(j);
        self.edges.push((i, j, r_ij));
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[(usize, usize, RotationMatrix)] {
        &self.edges
    }

    /// Adjacency as (neighbor, rotation mapping this node to the neighbor):
    /// for edge (i, j, R_ij), node i sees (j, R_ij) and node j sees (i, R_ij^T).
    fn adjacency(&self) -> BTreeMap<usize, Vec<(usize, Matrix3<f64>)>> {
        let mut adj: BTreeMap<usize, Vec<(usize, Matrix3<f64>)>> =
            self.nodes.iter().map(|&n| (n, Vec::new())).collect();
        for (i, j, r) in &self.edges {
            adj.get_mut(i).unwrap().push((*j, *r.matrix()));
            adj.get_mut(j).unwrap().push((*i, r.matrix().transpose()));
        }
        adj
    }
}

/// Absolute rotations per node from relative estimates: spanning-tree
/// initialization followed by `sweeps` rounds of per-node single-iteration
/// Weiszfeld updates. The node with the smallest id is anchored to identity;
/// updates within a sweep read the previous sweep's values so the result does
/// not depend on node order.
pub fn register_rotations(
    graph: &RotationGraph,
    sweeps: usize,
) -> Result<BTreeMap<usize, RotationMatrix>, AveragingError> {
    let anchor = *graph.nodes.iter().next().ok_or(AveragingError::EmptyInput)?;
    let adj = graph.adjacency();

    // BFS spanning tree from the anchor: R_j = R_ij R_i along tree edges
    let mut abs: BTreeMap<usize, Matrix3<f64>> = BTreeMap::new();
    abs.insert(anchor, Matrix3::identity());
    let mut queue = VecDeque::from([anchor]);
    while let Some(i) = queue.pop_front() {
        let r_i = abs[&i];
        for (j, r_ij) in &adj[&i] {
            if !abs.contains_key(j) {
                abs.insert(*j, r_ij * r_i);
                queue.push_back(*j);
            }
        }
    }
    if abs.len() != graph.nodes.len() {
        return Err(AveragingError::DisconnectedGraph);
    }

    for _ in 0..sweeps {
        let prev = abs.clone();
        for &node in &graph.nodes {
            if node == anchor {
                continue;
            }
            // estimates R_node = R_ji R_j over all incident edges
            let estimates: Vec<RotationMatrix> = adj[&node]
                .iter()
                .map(|(j, r_to_j)| {
                    RotationMatrix::project(&(r_to_j.transpose() * prev[j]))
                        .expect("estimate rotation")
                })
                .collect();
            if estimates.is_empty() {
                continue;
            }
            if let Some(step) = weiszfeld_step(&prev[&node], &estimates) {
                abs.insert(node, exp_so3(&step) * prev[&node]);
            }
        }
    }

    Ok(abs
        .into_iter()
        .map(|(k, m)| (k, RotationMatrix::project(&m).expect("registered rotation")))
        .collect())
}

/// One focal-length estimate for an image, paired with the estimate of the
/// partner image it was solved jointly with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalEstimate {
    pub value: f64,
    pub partner_image: usize,
    pub partner_value: f64,
    /// Shared identifier linking the two mirrored entries of one pair solve.
    pub link: u64,
}

/// Per-image multiset of focal estimates; every entry has a mirrored partner
/// entry in the partner image's list with the same link id.
#[derive(Debug, Clone, Default)]
pub struct FocalEstimatePool {
    per_image: BTreeMap<usize, Vec<FocalEstimate>>,
    next_link: u64,
}

impl FocalEstimatePool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record a pair solve that estimated f_i for image i and f_j for image j.
    pub fn add_pair_estimate(&mut self, image_i: usize, f_i: f64, image_j: usize, f_j: f64) {
        let link = self.next_link;
        self.next_link += 1;
        self.per_image.entry(image_i).or_default().push(FocalEstimate {
            value: f_i,
            partner_image: image_j,
            partner_value: f_j,
            link,
        });
        self.per_image.entry(image_j).or_default().push(FocalEstimate {
            value: f_j,
            partner_image: image_i,
            partner_value: f_i,
            link,
        });
    }

    pub fn images(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_image.keys().copied()
    }

    pub fn estimates(&self, image: usize) -> &[FocalEstimate] {
        self.per_image.get(&image).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Confidence counts: for each estimate, the number of estimates within a
/// beta fraction of it (itself included), normalized to [0, 1] by the
/// maximum count.
pub fn confidence_counts(estimates: &[f64], beta: f64) -> Vec<f64> {
    let raw: Vec<usize> = estimates
        .iter()
        .map(|&f_n| {
            estimates.iter().filter(|&&f_k| (f_k - f_n).abs() <= beta * f_n).count()
        })
        .collect();
    let max = raw.iter().copied().max().unwrap_or(0).max(1) as f64;
    raw.into_iter().map(|c| c as f64 / max).collect()
}

fn all_confidence_counts(pool: &FocalEstimatePool, beta: f64) -> BTreeMap<usize, Vec<f64>> {
    pool.images()
        .map(|img| {
            let values: Vec<f64> = pool.estimates(img).iter().map(|e| e.value).collect();
            (img, confidence_counts(&values, beta))
        })
        .collect()
}

/// Joint confidence counts for the estimates of one image.
///
/// For estimate f_i^n: over each partner image k, take the estimates within
/// the beta range of f_i^n that originate from pair (i, k), look up the
/// confidence counts of their partner estimates in image k, and average them;
/// Jcc is the sum of those per-partner means. Pairs with no in-range
/// estimates contribute zero.
pub fn joint_confidence(pool: &FocalEstimatePool, image: usize, beta: f64) -> Vec<f64> {
    let cc = all_confidence_counts(pool, beta);
    // link id -> position in its image's estimate list, for partner lookups
    let mut link_index: BTreeMap<(usize, u64), usize> = BTreeMap::new();
    for img in pool.images() {
        for (idx, e) in pool.estimates(img).iter().enumerate() {
            link_index.insert((img, e.link), idx);
        }
    }

    let entries = pool.estimates(image);
    entries
        .iter()
        .map(|target| {
            let mut partner_images: BTreeSet<usize> =
                entries.iter().map(|e| e.partner_image).collect();
            let mut jcc = 0.0;
            for k in std::mem::take(&mut partner_images) {
                let mut sum = 0.0;
                let mut count = 0usize;
                for e in entries {
                    if e.partner_image == k && (e.value - target.value).abs() <= beta * target.value
                    {
                        let partner_idx = link_index[&(k, e.link)];
                        sum += cc[&k][partner_idx];
                        count += 1;
                    }
                }
                if count > 0 {
                    jcc += sum / count as f64;
                }
            }
            jcc
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FocalMethod {
    Median,
    ConfidenceCount,
    JointConfidenceCount,
}

/// Consolidated focal length for one image: the median, or the estimate
/// maximizing the cc / Jcc score (ties broken toward the smallest value).
pub fn select_focal(
    pool: &FocalEstimatePool,
    image: usize,
    method: FocalMethod,
    beta: f64,
) -> Result<f64, AveragingError> {
    let entries = pool.estimates(image);
    if entries.is_empty() {
        return Err(AveragingError::EmptyPool(image));
    }
    let values: Vec<f64> = entries.iter().map(|e| e.value).collect();
    match method {
        FocalMethod::Median => {
            let mut sorted = values;
            sorted.sort_by(|a, b| a.total_cmp(b));
            let n = sorted.len();
            Ok(if n % 2 == 1 {
                sorted[n / 2]
            } else {
                0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
            })
        }
        FocalMethod::ConfidenceCount => {
            Ok(argmax_smallest(&values, &confidence_counts(&values, beta)))
        }
        FocalMethod::JointConfidenceCount => {
            Ok(argmax_smallest(&values, &joint_confidence(pool, image, beta)))
        }
    }
}

fn argmax_smallest(values: &[f64], scores: &[f64]) -> f64 {
    let mut best_score = f64::NEG_INFINITY;
    let mut best_value = f64::INFINITY;
    for (&v, &s) in values.iter().zip(scores) {
        if s > best_score || (s == best_score && v < best_value) {
            best_score = s;
            best_value = v;
        }
    }
    best_value
}

/// Relative focal error |est/truth - 1|.
pub fn delta_f(estimate: f64, truth: f64) -> f64 {
    (estimate / truth - 1.0).abs()
}
