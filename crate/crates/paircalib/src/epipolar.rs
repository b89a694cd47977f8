//! Fundamental-matrix estimation, the canonical projective pair, and robust
//! sampling.

use crate::geometry::{
    camera_center, canonicalized, point2h, skew, CameraFrame, CameraMatrix, GeometryError, Point2H,
};
use nalgebra::{DMatrix, Matrix3, Matrix3x4, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpipolarError {
    #[error("need at least {need} correspondences, got {got}")]
    TooFewCorrespondences { got: usize, need: usize },
    #[error("correspondence lists have mismatched lengths or non-finite values")]
    InvalidCorrespondences,
    #[error("design matrix is degenerate, cannot estimate F")]
    DegenerateSystem,
    #[error("matrix is not rank 2 (sigma3/sigma1 = {0:.3e})")]
    NotRankTwo(f64),
    #[error("RANSAC requires at least one iteration")]
    InvalidIterations,
    #[error("no RANSAC model reached 8 inliers (best consensus {best})")]
    NoConsensus { best: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One tentative point match between two images, Euclidean pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub x1: Vector2<f64>,
    pub x2: Vector2<f64>,
}

/// An ordered list of point matches with optional ground-truth inlier labels
/// and optional per-image (width, height) metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pairs: Vec<Correspondence>,
    labels: Option<Vec<bool>>,
    image1_size: Option<(f64, f64)>,
    image2_size: Option<(f64, f64)>,
}

impl CorrespondenceSet {
    pub fn new(pairs: Vec<Correspondence>) -> Result<Self, EpipolarError> {
        if pairs
            .iter()
            .any(|c| !(c.x1.iter().all(|v| v.is_finite()) && c.x2.iter().all(|v| v.is_finite())))
        {
            return Err(EpipolarError::InvalidCorrespondences);
        }
        Ok(Self {
            pairs,
            labels: None,
            image1_size: None,
            image2_size: None,
        })
    }

    pub fn from_points(points: &[((f64, f64), (f64, f64))]) -> Result<Self, EpipolarError> {
        Self::new(
            points
                .iter()
                .map(|&((x1, y1), (x2, y2))| Correspondence {
                    x1: Vector2::new(x1, y1),
                    x2: Vector2::new(x2, y2),
                })
                .collect(),
        )
    }

    pub fn with_labels(mut self, labels: Vec<bool>) -> Result<Self, EpipolarError> {
        if labels.len() != self.pairs.len() {
            return Err(EpipolarError::InvalidCorrespondences);
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_image_sizes(mut self, size1: (f64, f64), size2: (f64, f64)) -> Self {
        self.image1_size = Some(size1);
        self.image2_size = Some(size2);
        self
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[Correspondence] {
        &self.pairs
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub fn image1_size(&self) -> Option<(f64, f64)> {
        self.image1_size
    }

    pub fn image2_size(&self) -> Option<(f64, f64)> {
        self.image2_size
    }

    pub fn homogeneous(&self, index: usize) -> (Point2H, Point2H) {
        let c = &self.pairs[index];
        (point2h(c.x1.x, c.x1.y), point2h(c.x2.x, c.x2.y))
    }

    /// The subset at the given (ascending) indices, labels carried along.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            pairs: indices.iter().map(|&i| self.pairs[i]).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            image1_size: self.image1_size,
            image2_size: self.image2_size,
        }
    }

    /// Same matches with the two images exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            pairs: self
                .pairs
                .iter()
                .map(|c| Correspondence { x1: c.x2, x2: c.x1 })
                .collect(),
            labels: self.labels.clone(),
            image1_size: self.image2_size,
            image2_size: self.image1_size,
        }
    }
}

/// A 3x3 rank-2 homogeneous epipolar map, stored with unit Frobenius norm and
/// canonical sign, smallest singular value forced to exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalMatrix {
    m: Matrix3<f64>,
}

impl FundamentalMatrix {
    /// Tolerance on sigma3/sigma1 for accepting an input as rank 2.
    pub const RANK2_TOL: f64 = 1e-8;

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, EpipolarError> {
        let svd = m.svd(true, true);
        let s = svd.singular_values;
        if s[1] / s[0].max(f64::MIN_POSITIVE) < 1e-9 {
            return Err(EpipolarError::DegenerateSystem);
        }
        let ratio = s[2] / s[0];
        if ratio > Self::RANK2_TOL {
            return Err(EpipolarError::NotRankTwo(ratio));
        }
        Ok(Self::truncate(m))
    }

    /// Force rank 2 by zeroing the smallest singular value, then canonicalize.
    /// Used by the estimation paths where the input is a noisy linear solve.
    /// Inputs that are already rank 2 to machine precision are kept as they
    /// are; recomposing them would only add decomposition round-off.
    pub(crate) fn truncate(m: Matrix3<f64>) -> Self {
        let mut svd = m.svd(true, true);
        if svd.singular_values[2] < 1e-14 * svd.singular_values[0] {
            return Self { m: canonicalized(&m) };
        }
        svd.singular_values[2] = 0.0;
        let t = svd.recompose().expect("svd recompose");
        Self { m: canonicalized(&t) }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn transposed(&self) -> Self {
        Self { m: canonicalized(&self.m.transpose()) }
    }
}

/// Similarity that moves the centroid to the origin and scales the RMS
/// distance to sqrt(2).
fn hartley_transform(points: &[Vector2<f64>]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Vector2<f64>>() / n;
    let rms = (points.iter().map(|p| (p - centroid).norm_squared()).sum::<f64>() / n).sqrt();
    let s = if rms > 0.0 { 2f64.sqrt() / rms } else { 1.0 };
    Matrix3::new(
        s, 0.0, -s * centroid.x, //
        0.0, s, -s * centroid.y, //
        0.0, 0.0, 1.0,
    )
}

/// Hartley-normalized linear 8-point estimate with rank-2 enforcement.
pub fn estimate_f_eightpoint(corrs: &CorrespondenceSet) -> Result<FundamentalMatrix, EpipolarError> {
    estimate_f_eightpoint_indices(corrs, &(0..corrs.len()).collect::<Vec<_>>())
}

fn estimate_f_eightpoint_indices(
    corrs: &CorrespondenceSet,
    indices: &[usize],
) -> Result<FundamentalMatrix, EpipolarError> {
    if indices.len() < 8 {
        return Err(EpipolarError::TooFewCorrespondences { got: indices.len(), need: 8 });
    }
    let p1: Vec<Vector2<f64>> = indices.iter().map(|&i| corrs.pairs()[i].x1).collect();
    let p2: Vec<Vector2<f64>> = indices.iter().map(|&i| corrs.pairs()[i].x2).collect();
    let t1 = hartley_transform(&p1);
    let t2 = hartley_transform(&p2);

    // at least 9 rows so the full right singular basis exists for the
    // minimal 8-point sample (extra rows stay zero)
    let mut a = DMatrix::<f64>::zeros(indices.len().max(9), 9);
    for (row, (q1, q2)) in p1.iter().zip(p2.iter()).enumerate() {
        let u1 = t1 * point2h(q1.x, q1.y);
        let u2 = t2 * point2h(q2.x, q2.y);
        // x2^T F x1 = 0, F unrolled row-major
        a[(row, 0)] = u2.x * u1.x;
        a[(row, 1)] = u2.x * u1.y;
        a[(row, 2)] = u2.x;
        a[(row, 3)] = u2.y * u1.x;
        a[(row, 4)] = u2.y * u1.y;
        a[(row, 5)] = u2.y;
        a[(row, 6)] = u1.x;
        a[(row, 7)] = u1.y;
        a[(row, 8)] = 1.0;
    }

    let svd = a.svd(false, true);
    let s = &svd.singular_values;
    if s[7] / s[0].max(f64::MIN_POSITIVE) < 1e-13 {
        return Err(EpipolarError::DegenerateSystem);
    }
    let vt = svd.v_t.ok_or(EpipolarError::DegenerateSystem)?;
    let f = vt.row(8);
    let fn_ = Matrix3::new(f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8]);
    let denorm = t2.transpose() * fn_ * t1;
    Ok(FundamentalMatrix::truncate(denorm))
}

/// Sampson's first-order approximation to geometric error, pixels^2.
/// A vanishing denominator yields the +infinity sentinel.
pub fn sampson_error(f: &FundamentalMatrix, x1: &Point2H, x2: &Point2H) -> f64 {
    sampson_error_raw(f.matrix(), x1, x2)
}

pub(crate) fn sampson_error_raw(f: &Matrix3<f64>, x1: &Point2H, x2: &Point2H) -> f64 {
    let fx1 = f * x1;
    let ftx2 = f.transpose() * x2;
    let num = x2.dot(&fx1);
    let den = fx1.x * fx1.x + fx1.y * fx1.y + ftx2.x * ftx2.x + ftx2.y * ftx2.y;
    if den == 0.0 {
        return f64::INFINITY;
    }
    num * num / den
}

/// RANSAC over 8-point minimal samples scored by Sampson inlier count.
///
/// Each trial draws its sample from an RNG derived from (seed, trial index),
/// so the result does not depend on evaluation order. Ties between trials are
/// broken by lower total inlier Sampson error, then by lower trial index. The
/// winning model is re-fit on its inliers.
pub fn ransac_f(
    corrs: &CorrespondenceSet,
    iterations: usize,
    threshold: f64,
    seed: u64,
) -> Result<(FundamentalMatrix, Vec<bool>), EpipolarError> {
    if iterations == 0 {
        return Err(EpipolarError::InvalidIterations);
    }
    let n = corrs.len();
    if n < 8 {
        return Err(EpipolarError::TooFewCorrespondences { got: n, need: 8 });
    }

    let homog: Vec<(Point2H, Point2H)> = (0..n).map(|i| corrs.homogeneous(i)).collect();
    let mut best: Option<(usize, f64, FundamentalMatrix)> = None;
    for trial in 0..iterations {
        let mut rng = trial_rng(seed, trial as u64);
        let sample = rand::seq::index::sample(&mut rng, n, 8).into_vec();
        let f = match estimate_f_eightpoint_indices(corrs, &sample) {
            Ok(f) => f,
            Err(_) => continue,
        };
        let mut count = 0usize;
        let mut total = 0.0f64;
        for (x1, x2) in &homog {
            let e = sampson_error(&f, x1, x2);
            if e < threshold {
                count += 1;
                total += e;
            }
        }
        let better = match &best {
            None => true,
            Some((bc, bt, _)) => count > *bc || (count == *bc && total < *bt),
        };
        if better {
            best = Some((count, total, f));
        }
    }

    let (count, _, model) = best.ok_or(EpipolarError::NoConsensus { best: 0 })?;
    if count < 8 {
        return Err(EpipolarError::NoConsensus { best: count });
    }
    let consensus: Vec<usize> = (0..n)
        .filter(|&i| sampson_error(&model, &homog[i].0, &homog[i].1) < threshold)
        .collect();
    let refit = estimate_f_eightpoint_indices(corrs, &consensus)?;
    let mask: Vec<bool> = (0..n)
        .map(|i| sampson_error(&refit, &homog[i].0, &homog[i].1) < threshold)
        .collect();
    Ok((refit, mask))
}

pub(crate) fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    // splitmix64 of the pair, so nearby (seed, stream) values decorrelate
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

/// Left and right null vectors of F, unit-normalized with canonical sign.
#[derive(Debug, Clone, PartialEq)]
pub struct Epipoles {
    /// Right null vector: F e = 0 (epipole in image 1).
    pub e: Vector3<f64>,
    /// Left null vector: F^T a = 0 (epipole in image 2).
    pub a: Vector3<f64>,
}

pub fn epipoles(f: &FundamentalMatrix) -> Epipoles {
    let svd = f.matrix().svd(true, true);
    let u = svd.u.expect("svd with u");
    let vt = svd.v_t.expect("svd with v_t");
    let a = canonicalized(&u.column(2).into_owned());
    let e = canonicalized(&vt.row(2).transpose());
    Epipoles { e, a }
}

/// Canonical projective pair P1 = [I | 0], P2 = [[a]x F | a] with a the left
/// null vector of F.
pub fn canonical_pair(f: &FundamentalMatrix) -> (CameraMatrix, CameraMatrix) {
    let a = epipoles(f).a;
    let p1 = CameraMatrix::identity(CameraFrame::Projective);
    let p2 = camera_from_left_epipole(f, &a, 1.0);
    (p1, p2)
}

/// P2 = [[a]x (sign * F) | a]; the sign hypothesis matters because F is only
/// defined up to scale while the metric upgrade is not.
pub(crate) fn camera_from_left_epipole(
    f: &FundamentalMatrix,
    a: &Vector3<f64>,
    sign: f64,
) -> CameraMatrix {
    let block = skew(a) * (f.matrix() * sign);
    let mut m = Matrix3x4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&block);
    m.set_column(3, a);
    CameraMatrix::projective(m).expect("canonical pair camera has rank 3")
}

/// Fundamental matrix of a camera pair: F = [P2 C1]x P2 P1^+.
pub fn f_from_cameras(
    p1: &CameraMatrix,
    p2: &CameraMatrix,
) -> Result<FundamentalMatrix, EpipolarError> {
    let c1 = camera_center(p1)?;
    let e2 = p2.matrix() * c1;
    let pinv = p1
        .matrix()
        .clone_owned()
        .pseudo_inverse(1e-12)
        .map_err(|_| EpipolarError::DegenerateSystem)?;
    let f = skew(&e2) * (p2.matrix() * pinv);
    Ok(FundamentalMatrix::truncate(f))
}
