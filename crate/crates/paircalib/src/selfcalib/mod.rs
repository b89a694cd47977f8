//! Linear self-calibration and metric upgrade of a projective camera pair
//! with unknown, different focal lengths.
//!
//! The pipeline: build the canonical pair from F, form the six-row DIAC
//! system, reduce it with the structure-exploiting elimination, solve the
//! quadratic for the plane at infinity (two roots), upgrade with the
//! homography, and disambiguate the two candidate reconstructions with the
//! cheirality condition. A second pass on F^T puts camera 2 at the origin,
//! which pins the second focal length and the homogeneous-scale constant
//! that the five usable equations cannot see.

mod cheirality;
mod system;

pub use cheirality::{
    cheirality_select, depth_sign, triangulate_dlt, vote_candidate, CheiralityOutcome,
    ChosenCandidate, VoteCount,
};
pub use system::{
    build_augmented_system, quadric_from_unknowns, solve_unknowns, structured_reduce,
    AugmentedSystem, ReducedSystem, UnknownVector, ROW_TAGS,
};

use crate::epipolar::{
    camera_from_left_epipole, epipoles, estimate_f_eightpoint, ransac_f, CorrespondenceSet,
    EpipolarError, FundamentalMatrix,
};
use crate::geometry::{
    angle_deg, camera_center_euclidean, viewing_direction, CalibrationMatrix, CameraMatrix,
    GeometryError, RotationMatrix,
};
use nalgebra::{Matrix3, Matrix4, Vector3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibError {
    #[error(transparent)]
    Epipolar(#[from] EpipolarError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("camera is not a canonical pair (structural residual {residual:.3e})")]
    StructureViolation { residual: f64 },
    #[error("degenerate camera configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("first focal square came out non-positive ({value:.6e}); instance broken by noise")]
    NegativeFocalSquare { value: f64 },
    #[error("scaled second focal square came out non-positive ({value:.6e})")]
    NegativeScaledFocal { value: f64 },
    #[error("negative discriminant {discriminant:.6e} beyond tolerance (scale {scale:.3e})")]
    NegativeDiscriminant { discriminant: f64, scale: f64 },
    #[error("triangulation is degenerate for this correspondence")]
    DegenerateTriangulation,
    #[error("point lies on the principal plane, depth sign undefined")]
    PointOnPrincipalPlane,
    #[error("no correspondence produced a usable cheirality vote")]
    CheiralityDegenerate,
}

/// Upgrade homography H = [[K1, 0], [-p^T K1, 1]] built from f1 and the
/// plane-at-infinity coordinates.
pub fn homography_from_solution(f1: f64, p: &Vector3<f64>) -> Matrix4<f64> {
    debug_assert!(f1 > 0.0);
    let k1 = Matrix3::from_diagonal(&Vector3::new(f1, f1, 1.0));
    let mut h = Matrix4::identity();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&k1);
    h.fixed_view_mut::<1, 3>(3, 0).copy_from(&(-(k1 * p)).transpose());
    h
}

/// Apply the upgrade homography to both projective cameras; results are
/// renormalized metric cameras.
pub fn metric_pair(
    p_p1: &CameraMatrix,
    p_p2: &CameraMatrix,
    h: &Matrix4<f64>,
) -> (CameraMatrix, CameraMatrix) {
    let m1 = p_p1.matrix() * h;
    let m2 = p_p2.matrix() * h;
    (
        CameraMatrix::metric(m1).expect("upgraded camera 1").canonicalized(),
        CameraMatrix::metric(m2).expect("upgraded camera 2").canonicalized(),
    )
}

/// One of the two candidate metric reconstructions of a pair.
#[derive(Debug, Clone)]
pub struct CandidateReconstruction {
    pub camera1: CameraMatrix,
    pub camera2: CameraMatrix,
    /// Plane-at-infinity coordinates in the projective frame, (p, 1).
    pub plane: Vector3<f64>,
    pub unknowns: UnknownVector,
    /// Relative rotation (det +1) of camera 2 with respect to camera 1.
    pub rotation: Matrix3<f64>,
    /// Unit direction of the relative translation, pose convention.
    pub translation_dir: Vector3<f64>,
    /// Focal length of camera 2 as encoded in this candidate's DIAC block.
    pub f2_block: f64,
    /// Magnitude of the block-scale constant on the upgraded left block; a
    /// scale bookkeeping value, not an error.
    pub mu: f64,
    pub front_votes_both: usize,
    pub front_votes_cam2: usize,
    pub front_votes_cam1: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CheiralityVotes {
    /// Points in front of both cameras, per candidate: the deciding count.
    pub both: [usize; 2],
    pub cam2: [usize; 2],
    pub cam1: [usize; 2],
    pub valid: usize,
}

/// Cross-check between the forward and the transposed pass.
#[derive(Debug, Clone, Copy)]
pub struct PassConsistency {
    /// Relative difference between f1 solved directly and f1 unscaled from
    /// the reverse pass.
    pub f1_rel_diff: f64,
    /// Relative difference between f2 solved directly (reverse pass) and f2
    /// unscaled from the forward pass.
    pub f2_rel_diff: f64,
    pub ok: bool,
}

/// The complete output of the pair self-calibration.
#[derive(Debug, Clone)]
pub struct PairSolution {
    /// Focal length of camera 1, pixels (forward pass).
    pub f1: f64,
    /// Focal length of camera 2, pixels (transposed pass).
    pub f2: f64,
    /// Magnitude of the composite homogeneous-scale constant relating the
    /// estimated F to the ground-truth decomposition.
    pub kappa_epsilon: f64,
    pub candidates: [CandidateReconstruction; 2],
    pub chosen: ChosenCandidate,
    pub votes: CheiralityVotes,
    pub consistency: PassConsistency,
    /// Whether cheirality selected the opposite translation sign hypothesis.
    pub translation_flipped: bool,
}

impl PairSolution {
    pub fn chosen_candidate(&self) -> Option<&CandidateReconstruction> {
        match self.chosen {
            ChosenCandidate::First => Some(&self.candidates[0]),
            ChosenCandidate::Second => Some(&self.candidates[1]),
            ChosenCandidate::Undecided => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RansacOptions {
    pub iterations: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for RansacOptions {
    fn default() -> Self {
        Self { iterations: 300, threshold: 4.0, seed: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct CalibrateOptions {
    /// When set, F is estimated robustly and cheirality runs on the inliers.
    pub ransac: Option<RansacOptions>,
    /// Tolerance for the forward/reverse cross-consistency flag.
    pub consistency_tol: f64,
}

impl Default for CalibrateOptions {
    fn default() -> Self {
        Self { ransac: None, consistency_tol: 0.01 }
    }
}

/// Isotropic image-coordinate scale that balances the blocks of F. Pixel
/// coordinates make K = diag(f, f, 1) span six orders of magnitude and the
/// reduction loses its pivots; solving in coordinates scaled by 1/s and
/// mapping the outputs back restores the conditioning. Deterministic in F, so
/// rescaling F changes nothing.
pub(crate) fn balance_scale(f: &Matrix3<f64>) -> f64 {
    let upper = (f[(0, 0)].powi(2) + f[(0, 1)].powi(2) + f[(1, 0)].powi(2) + f[(1, 1)].powi(2))
        .sqrt();
    let cross = (f[(0, 2)].powi(2) + f[(1, 2)].powi(2) + f[(2, 0)].powi(2) + f[(2, 1)].powi(2))
        .sqrt();
    let corner = f[(2, 2)].abs();
    if upper <= 0.0 {
        return 1.0;
    }
    let from_corner = if corner > 0.0 { (corner / upper).sqrt() } else { 0.0 };
    let from_cross = cross / upper;
    let s = from_corner.max(from_cross);
    if s.is_finite() && s > 0.0 {
        s
    } else {
        1.0
    }
}

/// F expressed in image coordinates scaled by 1/s: D F D with D = diag(s, s, 1).
pub(crate) fn balanced_f(f: &FundamentalMatrix) -> (FundamentalMatrix, f64) {
    let s = balance_scale(f.matrix());
    let d = Matrix3::from_diagonal(&Vector3::new(s, s, 1.0));
    (FundamentalMatrix::truncate(d * f.matrix() * d), s)
}

/// One directional solve: canonical pair, system, reduction, roots.
struct SolvePass {
    p2: CameraMatrix,
    reduced: ReducedSystem,
    roots: (UnknownVector, UnknownVector),
    /// omega2*(3,3) evaluated at the solution: the squared block scale.
    mu_squared: f64,
}

fn solve_pass(
    f: &FundamentalMatrix,
    left_null: &Vector3<f64>,
    sign: f64,
) -> Result<SolvePass, CalibError> {
    let p2 = camera_from_left_epipole(f, left_null, sign);
    let sys = build_augmented_system(&p2);
    let reduced = structured_reduce(&sys)?;
    let roots = solve_unknowns(&reduced)?;
    let omega = p2.matrix() * quadric_from_unknowns(&roots.0) * p2.matrix().transpose();
    let mu_squared = omega[(2, 2)];
    if !(mu_squared > 0.0) {
        return Err(CalibError::DegenerateConfiguration(
            "DIAC normalization entry is non-positive",
        ));
    }
    Ok(SolvePass { p2, reduced, roots, mu_squared })
}

/// Metric candidates from a forward pass solved in balanced coordinates.
/// Cameras are mapped back to pixel coordinates (left-multiplied by
/// diag(s, s, 1)), the translation column is scaled so the camera-2 center
/// has unit norm (the Appendix normalization that makes the mirror and
/// bisector identities exact), and the matrices are canonicalized.
fn assemble_candidates(
    pass: &SolvePass,
    f1_balanced: f64,
    coord_scale: f64,
) -> Result<[CandidateReconstruction; 2], CalibError> {
    let unscale = Matrix3::from_diagonal(&Vector3::new(coord_scale, coord_scale, 1.0));
    // [I | 0] H = [K1 | 0] for every root; in pixel units f1 = s * f1'
    let mut m1 = nalgebra::Matrix3x4::<f64>::zeros();
    m1.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&CalibrationMatrix::new(coord_scale * f1_balanced)?.matrix());
    let camera1 = CameraMatrix::metric(m1)
        .map_err(|_| CalibError::DegenerateConfiguration("upgraded camera 1 degenerate"))?
        .canonicalized();

    let mut out = Vec::with_capacity(2);
    for x in [&pass.roots.0, &pass.roots.1] {
        let plane = x.plane();
        let h = homography_from_solution(f1_balanced, &plane);
        let raw2 = pass.p2.matrix() * h;
        let m = raw2.fixed_view::<3, 3>(0, 0).into_owned();
        let omega = m * m.transpose();
        let mu_sq = omega[(2, 2)];
        if !(mu_sq > 0.0) {
            return Err(CalibError::DegenerateConfiguration("candidate block scale vanished"));
        }
        let f2_balanced = (omega[(0, 0)] / mu_sq).sqrt();
        let k2_inv = CalibrationMatrix::new(f2_balanced)?.inverse_matrix();
        let r_scaled = k2_inv * m;
        let det = r_scaled.determinant();
        let rotation = RotationMatrix::project(&(r_scaled / det.cbrt()))?;
        let t_col = raw2.column(3).into_owned();
        // pose translation direction; identical in balanced and pixel units
        let translation_dir = (k2_inv * t_col * det.signum()).normalize();

        let pixel = unscale * raw2;
        let m_pixel = pixel.fixed_view::<3, 3>(0, 0).into_owned();
        let t_pixel = pixel.column(3).into_owned();
        let center = m_pixel
            .try_inverse()
            .map(|inv| -inv * t_pixel)
            .ok_or(CalibError::DegenerateConfiguration("candidate left block singular"))?;
        let mut normalized = pixel;
        normalized.set_column(3, &(t_pixel / center.norm()));
        // positive rescale only: the relative determinant sign of the two
        // candidates' blocks is part of the construction (sign flips would
        // break the opposite-determinant relation)
        normalized /= normalized.norm();
        let camera2 = CameraMatrix::metric(normalized)
            .map_err(|_| CalibError::DegenerateConfiguration("candidate camera degenerate"))?;

        out.push(CandidateReconstruction {
            camera1: camera1.clone(),
            camera2,
            plane,
            unknowns: *x,
            rotation: *rotation.matrix(),
            translation_dir,
            f2_block: coord_scale * f2_balanced,
            mu: mu_sq.sqrt(),
            front_votes_both: 0,
            front_votes_cam2: 0,
            front_votes_cam1: 0,
        });
    }
    let b: [CandidateReconstruction; 2] =
        out.try_into().map_err(|_| CalibError::DegenerateConfiguration("candidate assembly"))?;
    Ok(b)
}

fn camera_pairs(c: &[CandidateReconstruction; 2]) -> [(CameraMatrix, CameraMatrix); 2] {
    [
        (c[0].camera1.clone(), c[0].camera2.clone()),
        (c[1].camera1.clone(), c[1].camera2.clone()),
    ]
}

/// Self-calibrate and upgrade a pair from its fundamental matrix; when
/// correspondences are supplied, cheirality picks both the translation-sign
/// hypothesis and the valid root.
///
/// F is homogeneous, so the estimated matrix carries an arbitrary nonzero
/// scale relative to the ground-truth decomposition. The plane solve absorbs
/// the magnitude (it only shifts the scaled f2^2 slot and the recovered
/// kappa-epsilon), while the sign flips the reconstruction between the true
/// scene and its point reflection; the cheirality vote over both sign
/// hypotheses settles the latter.
pub fn calibrate_from_f(
    f: &FundamentalMatrix,
    corrs: Option<&CorrespondenceSet>,
    opts: &CalibrateOptions,
) -> Result<PairSolution, CalibError> {
    let (fb, coord_scale) = balanced_f(f);
    let ep = epipoles(&fb);
    let forward = solve_pass(&fb, &ep.a, 1.0)?;
    let reverse = solve_pass(&fb.transposed(), &ep.e, 1.0)?;

    let f1_balanced = forward.reduced.b[0].sqrt();
    let f1 = coord_scale * f1_balanced;
    let f2 = coord_scale * reverse.reduced.b[0].sqrt();
    let kappa_epsilon = (forward.reduced.b[1] / reverse.reduced.b[0]).sqrt();

    let f2_from_forward = coord_scale * (forward.reduced.b[1] / forward.mu_squared).sqrt();
    let f1_from_reverse = coord_scale * (reverse.reduced.b[1] / reverse.mu_squared).sqrt();
    let consistency = PassConsistency {
        f1_rel_diff: (f1_from_reverse - f1).abs() / f1,
        f2_rel_diff: (f2_from_forward - f2).abs() / f2,
        ok: (f1_from_reverse - f1).abs() / f1 <= opts.consistency_tol
            && (f2_from_forward - f2).abs() / f2 <= opts.consistency_tol,
    };

    let mut candidates = assemble_candidates(&forward, f1_balanced, coord_scale)?;
    let mut chosen = ChosenCandidate::Undecided;
    let mut votes = CheiralityVotes::default();
    let mut translation_flipped = false;

    if let Some(corrs) = corrs.filter(|c| !c.is_empty()) {
        let outcome_pos = cheirality_select(&camera_pairs(&candidates), corrs)?;
        let flipped_pass = solve_pass(&fb, &ep.a, -1.0)?;
        let flipped = assemble_candidates(&flipped_pass, f1_balanced, coord_scale)?;
        let outcome_neg = cheirality_select(&camera_pairs(&flipped), corrs)?;

        let score = |o: &CheiralityOutcome| o.counts[0].front_both.max(o.counts[1].front_both);
        let outcome = if score(&outcome_neg) > score(&outcome_pos) {
            candidates = flipped;
            translation_flipped = true;
            outcome_neg
        } else {
            outcome_pos
        };
        chosen = outcome.chosen;
        votes = CheiralityVotes {
            both: [outcome.counts[0].front_both, outcome.counts[1].front_both],
            cam2: [outcome.counts[0].front_cam2, outcome.counts[1].front_cam2],
            cam1: [outcome.counts[0].front_cam1, outcome.counts[1].front_cam1],
            valid: outcome.counts[0].valid.max(outcome.counts[1].valid),
        };
        for (i, candidate) in candidates.iter_mut().enumerate() {
            candidate.front_votes_both = votes.both[i];
            candidate.front_votes_cam2 = votes.cam2[i];
            candidate.front_votes_cam1 = votes.cam1[i];
        }
    }

    Ok(PairSolution {
        f1,
        f2,
        kappa_epsilon,
        candidates,
        chosen,
        votes,
        consistency,
        translation_flipped,
    })
}

/// Estimate F from the matches (robustly when requested) and calibrate.
pub fn calibrate_from_matches(
    corrs: &CorrespondenceSet,
    opts: &CalibrateOptions,
) -> Result<PairSolution, CalibError> {
    match &opts.ransac {
        Some(r) => {
            let (f, mask) = ransac_f(corrs, r.iterations, r.threshold, r.seed)?;
            let inliers: Vec<usize> =
                mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
            calibrate_from_f(&f, Some(&corrs.subset(&inliers)), opts)
        }
        None => {
            let f = estimate_f_eightpoint(corrs)?;
            calibrate_from_f(&f, Some(corrs), opts)
        }
    }
}

/// One theorem-derived check of the relation between the two candidates.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TheoremCheck {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Report of the geometric relations that any valid pair of candidate
/// reconstructions must satisfy: mirrored centers, the bisector equalities,
/// the 180-degree complements, opposite determinant signs, and equal
/// calibration blocks. Diagnostic; never fails the solve.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GeometryReport {
    pub checks: Vec<TheoremCheck>,
    pub all_pass: bool,
}

pub const THEOREM_TOL: f64 = 1e-6;

pub fn verify_solution_geometry(sol: &PairSolution) -> Result<GeometryReport, CalibError> {
    let c1 = camera_center_euclidean(&sol.candidates[0].camera2)?;
    let c2 = camera_center_euclidean(&sol.candidates[1].camera2)?;
    let v1 = viewing_direction(&sol.candidates[0].camera2)?;
    let v2 = viewing_direction(&sol.candidates[1].camera2)?;
    let det1 = sol.candidates[0].camera2.left_block().determinant();
    let det2 = sol.candidates[1].camera2.left_block().determinant();

    let mut checks = Vec::new();
    let mut push = |name: &'static str, value: f64, tolerance: f64| {
        checks.push(TheoremCheck { name, value, tolerance, pass: value <= tolerance });
    };

    push("mirror_centers", (c1 + c2).norm() / c1.norm(), THEOREM_TOL);
    let a11 = angle_deg(&c1, &v1)?;
    let a12 = angle_deg(&c1, &v2)?;
    let a21 = angle_deg(&c2, &v1)?;
    let a22 = angle_deg(&c2, &v2)?;
    push("bisector_c1", (a11 - a12).abs(), THEOREM_TOL);
    push("bisector_c2", (a21 - a22).abs(), THEOREM_TOL);
    push("complement_v1", (a11 + a21 - 180.0).abs(), THEOREM_TOL);
    push("complement_v2", (a12 + a22 - 180.0).abs(), THEOREM_TOL);
    push(
        "opposite_det_signs",
        if det1.signum() * det2.signum() == -1.0 { 0.0 } else { 1.0 },
        0.5,
    );
    push(
        "equal_k_blocks",
        (sol.candidates[0].f2_block - sol.candidates[1].f2_block).abs()
            / sol.candidates[0].f2_block,
        THEOREM_TOL,
    );

    let all_pass = checks.iter().all(|c| c.pass);
    Ok(GeometryReport { checks, all_pass })
}
