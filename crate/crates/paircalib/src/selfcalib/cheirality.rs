//! Triangulation and the front-of-camera test used to disambiguate the two
//! candidate metric reconstructions.

use super::CalibError;
use crate::epipolar::CorrespondenceSet;
use crate::geometry::{CameraMatrix, Point2H, Point3H};
use nalgebra::Matrix4;

/// Homogeneous DLT triangulation from the stacked cross-product constraints
/// of both views. Errors on near-degenerate geometry (identical rays).
pub fn triangulate_dlt(
    p1: &CameraMatrix,
    p2: &CameraMatrix,
    x1: &Point2H,
    x2: &Point2H,
) -> Result<Point3H, CalibError> {
    let mut a = Matrix4::<f64>::zeros();
    for (p, x) in [(p1, x1), (p2, x2)] {
        let m = p.matrix();
        let r0 = m.row(0) * x.z - m.row(2) * x.x;
        let r1 = m.row(1) * x.z - m.row(2) * x.y;
        let base = if std::ptr::eq(p, p1) { 0 } else { 2 };
        a.row_mut(base).copy_from(&r0);
        a.row_mut(base + 1).copy_from(&r1);
    }
    let svd = a.svd(false, true);
    let s = &svd.singular_values;
    if s[2] / s[0].max(f64::MIN_POSITIVE) < 1e-12 {
        return Err(CalibError::DegenerateTriangulation);
    }
    let vt = svd.v_t.expect("svd v_t");
    let x = vt.row(3).transpose();
    Ok(x / x.norm())
}

/// +1 when the homogeneous point lies in front of the camera, -1 behind:
/// the sign of w * X4 * det(M) with w the projective depth (P X)_3. Both the
/// camera and the point may carry either homogeneous sign.
pub fn depth_sign(p: &CameraMatrix, x: &Point3H) -> Result<i8, CalibError> {
    let w = (p.matrix() * x)[2];
    if w.abs() <= 1e-14 * p.matrix().norm() * x.norm() {
        return Err(CalibError::PointOnPrincipalPlane);
    }
    let det = p.left_block().determinant();
    let s = w * x[3] * det;
    if s == 0.0 {
        return Err(CalibError::PointOnPrincipalPlane);
    }
    Ok(if s > 0.0 { 1 } else { -1 })
}

/// Front-vote tallies of one candidate pair over a correspondence set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VoteCount {
    /// Points in front of both cameras: the deciding count. Camera-2 votes
    /// alone leave the selection ambiguous on a visible fraction of
    /// instances, where the spurious twin keeps every point in front of
    /// camera 2 but behind camera 1.
    pub front_both: usize,
    /// Points in front of camera 2.
    pub front_cam2: usize,
    /// Points in front of camera 1.
    pub front_cam1: usize,
    /// Correspondences with a non-degenerate triangulation.
    pub valid: usize,
}

/// Tally front votes for a candidate pair.
pub fn vote_candidate(
    cameras: &(CameraMatrix, CameraMatrix),
    corrs: &CorrespondenceSet,
) -> VoteCount {
    let mut votes = VoteCount::default();
    for i in 0..corrs.len() {
        let (x1, x2) = corrs.homogeneous(i);
        let Ok(point) = triangulate_dlt(&cameras.0, &cameras.1, &x1, &x2) else {
            continue;
        };
        let (Ok(s1), Ok(s2)) = (depth_sign(&cameras.0, &point), depth_sign(&cameras.1, &point))
        else {
            continue;
        };
        votes.valid += 1;
        if s2 > 0 {
            votes.front_cam2 += 1;
        }
        if s1 > 0 {
            votes.front_cam1 += 1;
        }
        if s1 > 0 && s2 > 0 {
            votes.front_both += 1;
        }
    }
    votes
}

/// Which of the two candidates cheirality committed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChosenCandidate {
    First,
    Second,
    Undecided,
}

/// Outcome of the cheirality vote over both candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheiralityOutcome {
    pub chosen: ChosenCandidate,
    pub counts: [VoteCount; 2],
}

/// Triangulate every match under each candidate and select the candidate with
/// strictly more points in front of both cameras; a tie is left undecided.
pub fn cheirality_select(
    candidates: &[(CameraMatrix, CameraMatrix); 2],
    corrs: &CorrespondenceSet,
) -> Result<CheiralityOutcome, CalibError> {
    let counts = [
        vote_candidate(&candidates[0], corrs),
        vote_candidate(&candidates[1], corrs),
    ];
    if counts[0].valid == 0 && counts[1].valid == 0 {
        return Err(CalibError::CheiralityDegenerate);
    }
    let chosen = match counts[0].front_both.cmp(&counts[1].front_both) {
        std::cmp::Ordering::Greater => ChosenCandidate::First,
        std::cmp::Ordering::Less => ChosenCandidate::Second,
        std::cmp::Ordering::Equal => ChosenCandidate::Undecided,
    };
    Ok(CheiralityOutcome { chosen, counts })
}
