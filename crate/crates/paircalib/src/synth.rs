//! Synthetic two-view scenes with exact ground truth, plus the error metrics
//! and the sigma-grid benchmark driver.
//!
//! Points are placed by rejection sampling so that every point is in front of
//! both cameras and projects inside both images; noise is i.i.d. Gaussian per
//! image coordinate. All randomness derives from explicit seeds.

use crate::averaging::geodesic_distance_raw;
use crate::epipolar::{estimate_f_eightpoint, trial_rng, Correspondence, CorrespondenceSet};
use crate::geometry::{angle_deg, CalibrationMatrix, CameraMatrix, GeometryError, RotationMatrix};
use crate::selfcalib::{calibrate_from_matches, CalibrateOptions, ChosenCandidate, PairSolution};
use nalgebra::{Matrix3, Matrix3x4, Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("need at least 8 points, got {0}")]
    TooFewPoints(usize),
    #[error("could not place a cheirality-valid point after {0} attempts")]
    PlacementFailed(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Configuration of a synthetic camera pair and point cloud.
#[derive(Debug, Clone)]
pub struct SceneConfig {
    pub n_points: usize,
    /// Focal lengths in pixels.
    pub f1: f64,
    pub f2: f64,
    /// Center of camera 2 in world units (camera 1 sits at the origin).
    pub baseline: Vector3<f64>,
    /// Rotation of camera 2 (world-to-camera); identity looks down +z like
    /// camera 1.
    pub rotation: Matrix3<f64>,
    /// Image noise, pixels, i.i.d. per coordinate.
    pub sigma: f64,
    pub seed: u64,
    /// Image (width, height); projections are kept inside the centered box.
    pub image_size: (f64, f64),
    /// Depth interval of the point cloud along +z.
    pub depth_range: (f64, f64),
    /// Lateral half-extent of the point cloud.
    pub spread: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        // camera 2 fixates a point off camera 1's principal axis: putting the
        // target on that axis makes the two optical axes coplanar, which is
        // the critical configuration where two-view focal self-calibration
        // genuinely loses rank
        let baseline = Vector3::new(1.0, 0.15, -0.1);
        let target = Vector3::new(0.45, -0.35, 7.0);
        Self {
            n_points: 100,
            f1: 1000.0,
            f2: 1200.0,
            baseline,
            rotation: look_at_rotation(&baseline, &target, 0.0),
            sigma: 0.0,
            seed: 0,
            image_size: (2000.0, 1500.0),
            depth_range: (5.0, 10.0),
            spread: 2.0,
        }
    }
}

impl SceneConfig {
    /// Random pair in the default focal range with a camera 2 placed to the
    /// side and turned toward the cloud. Two-view focal self-calibration
    /// genuinely loses rank when the optical axes are coplanar (intersecting
    /// or parallel), so targets are resampled until the configuration keeps a
    /// margin from that manifold. Used by the randomized suites.
    pub fn random(seed: u64) -> Self {
        let mut rng = trial_rng(seed, 0xC0FFEE);
        let f1 = rng.random_range(800.0..1500.0);
        let f2 = rng.random_range(800.0..1500.0);
        let baseline = Vector3::new(
            rng.random_range(0.6..1.6) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            rng.random_range(-0.4..0.4),
            rng.random_range(-0.3..0.3),
        );
        let sign =
            |rng: &mut rand_chacha::ChaCha8Rng| if rng.random_bool(0.5) { 1.0f64 } else { -1.0 };
        let target = loop {
            let t = Vector3::new(
                sign(&mut rng) * rng.random_range(0.25..0.6),
                sign(&mut rng) * rng.random_range(0.2..0.5),
                rng.random_range(6.0..8.5),
            );
            // camera 1's axis is the z line through the origin; camera 2's
            // axis runs from the baseline toward the target: coplanarity of
            // the axes is the normalized triple product with z
            let axis2 = t - baseline;
            let margin = (baseline.x * axis2.y - baseline.y * axis2.x).abs()
                / (baseline.norm() * axis2.norm());
            if margin > 0.035 {
                break t;
            }
        };
        let roll = rng.random_range(-8.0..8.0f64);
        Self {
            f1,
            f2,
            baseline,
            rotation: look_at_rotation(&baseline, &target, roll),
            seed,
            ..Self::default()
        }
    }
}

/// World-to-camera rotation for a camera at `center` whose principal axis
/// points at `target`, with the given roll about the axis, in degrees.
pub fn look_at_rotation(center: &Vector3<f64>, target: &Vector3<f64>, roll_deg: f64) -> Matrix3<f64> {
    let z = (target - center).normalize();
    let up = if z.y.abs() > 0.95 { Vector3::x() } else { Vector3::y() };
    let x = up.cross(&z).normalize();
    let y = z.cross(&x);
    // rows are the camera axes expressed in world coordinates
    let base = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    let roll = RotationMatrix::from_axis_angle_deg(&Vector3::z(), roll_deg)
        .expect("roll rotation")
        .matrix()
        .clone_owned();
    roll * base
}

/// Ground-truth scene: metric cameras and the world points behind a
/// correspondence set.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub k1: CalibrationMatrix,
    pub k2: CalibrationMatrix,
    /// Rotation of camera 2 (camera 1 is the identity at the origin).
    pub r2: Matrix3<f64>,
    /// Center of camera 2.
    pub c2: Vector3<f64>,
    pub points: Vec<Vector3<f64>>,
    pub sigma: f64,
    pub seed: u64,
    pub image_size: (f64, f64),
}

impl SyntheticScene {
    /// P1 = K1 [I | 0].
    pub fn camera1(&self) -> CameraMatrix {
        let mut m = Matrix3x4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.k1.matrix());
        CameraMatrix::metric(m).expect("camera 1")
    }

    /// P2 = K2 [R2 | -R2 C2].
    pub fn camera2(&self) -> CameraMatrix {
        let kr = self.k2.matrix() * self.r2;
        let mut m = Matrix3x4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&kr);
        m.set_column(3, &(-kr * self.c2));
        CameraMatrix::metric(m).expect("camera 2")
    }

    /// True relative rotation (camera 1 frame to camera 2 frame).
    pub fn relative_rotation(&self) -> Matrix3<f64> {
        self.r2
    }

    /// Unit direction of the true relative translation (pose convention
    /// x_cam2 = R2 x + t).
    pub fn translation_direction(&self) -> Vector3<f64> {
        (-self.r2 * self.c2).normalize()
    }
}

/// Generate a scene and its (optionally noisy) correspondences. All produced
/// matches are genuine; labels are attached as all-true so that outlier
/// injection can extend them.
pub fn make_scene(cfg: &SceneConfig) -> Result<(SyntheticScene, CorrespondenceSet), SynthError> {
    if cfg.n_points < 8 {
        return Err(SynthError::TooFewPoints(cfg.n_points));
    }
    let mut rng = trial_rng(cfg.seed, 0x5CE11E);
    let k1 = CalibrationMatrix::new(cfg.f1)?;
    let k2 = CalibrationMatrix::new(cfg.f2)?;
    let half_w = cfg.image_size.0 * 0.5 - 2.0;
    let half_h = cfg.image_size.1 * 0.5 - 2.0;

    let project = |point: &Vector3<f64>, r: &Matrix3<f64>, c: &Vector3<f64>, f: f64| {
        let cam = r * (point - c);
        if cam.z < 0.25 {
            return None;
        }
        let u = f * cam.x / cam.z;
        let v = f * cam.y / cam.z;
        if u.abs() > half_w || v.abs() > half_h {
            return None;
        }
        Some(Vector2::new(u, v))
    };

    let identity = Matrix3::identity();
    let origin = Vector3::zeros();
    let mut points = Vec::with_capacity(cfg.n_points);
    let mut clean = Vec::with_capacity(cfg.n_points);
    let mut attempts = 0usize;
    let max_attempts = cfg.n_points * 1000;
    while points.len() < cfg.n_points {
        attempts += 1;
        if attempts > max_attempts {
            return Err(SynthError::PlacementFailed(max_attempts));
        }
        let p = Vector3::new(
            rng.random_range(-cfg.spread..cfg.spread),
            rng.random_range(-0.75 * cfg.spread..0.75 * cfg.spread),
            rng.random_range(cfg.depth_range.0..cfg.depth_range.1),
        );
        let (Some(u1), Some(u2)) = (
            project(&p, &identity, &origin, cfg.f1),
            project(&p, &cfg.rotation, &cfg.baseline, cfg.f2),
        ) else {
            continue;
        };
        points.push(p);
        clean.push((u1, u2));
    }

    let mut pairs = Vec::with_capacity(cfg.n_points);
    if cfg.sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.sigma).expect("gaussian");
        for (u1, u2) in &clean {
            pairs.push(Correspondence {
                x1: u1 + Vector2::new(normal.sample(&mut rng), normal.sample(&mut rng)),
                x2: u2 + Vector2::new(normal.sample(&mut rng), normal.sample(&mut rng)),
            });
        }
    } else {
        pairs.extend(clean.iter().map(|(u1, u2)| Correspondence { x1: *u1, x2: *u2 }));
    }

    let corrs = CorrespondenceSet::new(pairs)
        .expect("finite synthetic correspondences")
        .with_labels(vec![true; cfg.n_points])
        .expect("label length")
        .with_image_sizes(cfg.image_size, cfg.image_size);

    Ok((
        SyntheticScene {
            k1,
            k2,
            r2: cfg.rotation,
            c2: cfg.baseline,
            points,
            sigma: cfg.sigma,
            seed: cfg.seed,
            image_size: cfg.image_size,
        },
        corrs,
    ))
}

/// Parameters for the order-preserving facade scene used by the match
/// verification harness.
#[derive(Debug, Clone)]
pub struct FacadeConfig {
    pub n_points: usize,
    /// Depth relief of the facade in world units; larger relief produces more
    /// order violations between the views.
    pub relief: f64,
    pub seed: u64,
    pub image_size: (f64, f64),
}

impl Default for FacadeConfig {
    fn default() -> Self {
        Self { n_points: 300, relief: 2.5, seed: 0, image_size: (2000.0, 1500.0) }
    }
}

/// A frontal building facade seen from two nearby, nearly level viewpoints:
/// the matched points keep their left-right and down-up order up to small
/// parallax-induced violations, which is the regime the order-consistency
/// verification is built for. All matches are genuine (labels all true).
pub fn make_facade_scene(cfg: &FacadeConfig) -> CorrespondenceSet {
    let mut rng = trial_rng(cfg.seed, 0xFACADE);
    let f1 = 1000.0;
    let f2 = 1050.0;
    let c2 = Vector3::new(0.45, 0.06, -0.04);
    let r2 = look_at_rotation(&c2, &Vector3::new(0.25, -0.1, 8.0), 1.0);
    let half_w = cfg.image_size.0 * 0.5 - 2.0;
    let half_h = cfg.image_size.1 * 0.5 - 2.0;

    let mut pairs = Vec::with_capacity(cfg.n_points);
    while pairs.len() < cfg.n_points {
        let x: f64 = rng.random_range(-4.0..4.0);
        let y: f64 = rng.random_range(-2.8..2.8);
        let z = 8.0
            + cfg.relief * ((x * 0.9).sin() * (y * 1.1).cos())
            + rng.random_range(-0.3..0.3) * cfg.relief;
        let p = Vector3::new(x, y, z);

        let u1 = Vector2::new(f1 * p.x / p.z, f1 * p.y / p.z);
        let cam2 = r2 * (p - c2);
        if cam2.z < 0.5 {
            continue;
        }
        let u2 = Vector2::new(f2 * cam2.x / cam2.z, f2 * cam2.y / cam2.z);
        if u1.x.abs() > half_w || u1.y.abs() > half_h || u2.x.abs() > half_w || u2.y.abs() > half_h
        {
            continue;
        }
        pairs.push(Correspondence { x1: u1, x2: u2 });
    }

    CorrespondenceSet::new(pairs)
        .expect("finite facade correspondences")
        .with_labels(vec![true; cfg.n_points])
        .expect("label length")
        .with_image_sizes(cfg.image_size, cfg.image_size)
}

/// A planted focal-estimate pool with a pair-consistent correct minority mode
/// and a pair-inconsistent wrong majority mode, plus the true focal lengths.
///
/// Per image pair, a minority of solves lands near the true focal lengths of
/// both images (tightly, so the correct values corroborate each other across
/// pairs), while the majority lands in a broad low cluster whose partner
/// values scatter uniformly. The median is pulled into the majority mode;
/// counting in-range support recovers the correct mode more often; weighting
/// that support by the partner estimates' own support does so reliably.
pub fn make_focal_pool_benchmark(
    seed: u64,
    n_images: usize,
    estimates_per_pair: usize,
) -> (crate::averaging::FocalEstimatePool, Vec<f64>) {
    let mut rng = trial_rng(seed, 0xF0CA1);
    let truths: Vec<f64> = (0..n_images).map(|_| rng.random_range(900.0..1400.0)).collect();
    let mut pool = crate::averaging::FocalEstimatePool::new();
    for i in 0..n_images {
        for j in (i + 1)..n_images {
            for _ in 0..estimates_per_pair {
                if rng.random_bool(0.34) {
                    // correct mode: both ends near their truths
                    pool.add_pair_estimate(
                        i,
                        truths[i] * rng.random_range(0.98..1.02),
                        j,
                        truths[j] * rng.random_range(0.98..1.02),
                    );
                } else {
                    // wrong mode: one end in a low cluster dense enough to
                    // rival the correct mode's in-range count, the other
                    // scattered so the modes are pair-inconsistent
                    let low = rng.random_range(0.50..0.76);
                    let scatter = rng.random_range(0.25..1.50);
                    if rng.random_bool(0.5) {
                        pool.add_pair_estimate(i, truths[i] * low, j, truths[j] * scatter);
                    } else {
                        pool.add_pair_estimate(i, truths[i] * scatter, j, truths[j] * low);
                    }
                }
            }
        }
    }
    (pool, truths)
}

/// A relative-rotation graph over a path backbone, two parallel estimates
/// per adjacent pair plus one skip estimate two nodes ahead, with a fraction
/// of all edges corrupted by large random rotations (uniformly, without
/// replacement). Returns the graph and the ground-truth absolute rotations.
///
/// The deep backbone makes the spanning-tree initialization inherit whole
/// misaligned subtrees from corrupted tree edges, while the duplicate and
/// skip estimates carry the redundancy the averaging sweeps draw on.
pub fn make_rotation_graph_benchmark(
    seed: u64,
    n_nodes: usize,
    corrupt_fraction: f64,
) -> (crate::averaging::RotationGraph, Vec<RotationMatrix>) {
    use crate::averaging::RotationGraph;
    let mut rng = trial_rng(seed, 0x6AF);
    let random_rotation = |rng: &mut rand_chacha::ChaCha8Rng, min_deg: f64, max_deg: f64| {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0f64),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let axis = if axis.norm() < 1e-9 { Vector3::x() } else { axis };
        let angle = rng.random_range(min_deg..max_deg)
            * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        RotationMatrix::from_axis_angle_deg(&axis, angle).expect("random rotation")
    };

    let truth: Vec<RotationMatrix> =
        (0..n_nodes).map(|_| random_rotation(&mut rng, 0.0, 179.0)).collect();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for i in 1..n_nodes {
        edges.push((i - 1, i));
        edges.push((i - 1, i));
    }
    for i in 0..n_nodes.saturating_sub(2) {
        edges.push((i, i + 2));
    }
    let n_corrupt = ((edges.len() as f64) * corrupt_fraction).ceil() as usize;
    let corrupted: std::collections::BTreeSet<usize> =
        rand::seq::index::sample(&mut rng, edges.len(), n_corrupt.min(edges.len()))
            .into_iter()
            .collect();

    let mut graph = RotationGraph::new();
    for (idx, (i, j)) in edges.iter().enumerate() {
        let mut rel = truth[*j].matrix() * truth[*i].matrix().transpose();
        if corrupted.contains(&idx) {
            rel = random_rotation(&mut rng, 90.0, 180.0).matrix() * rel;
        }
        graph.add_edge(*i, *j, RotationMatrix::project(&rel).expect("relative rotation"));
    }
    (graph, truth)
}

/// Append `fraction / (1 - fraction)` as many uniform random false matches as
/// there are true ones, then shuffle; labels mark the planted truth.
pub fn inject_outliers(
    corrs: &CorrespondenceSet,
    fraction: f64,
    seed: u64,
) -> CorrespondenceSet {
    let mut rng = trial_rng(seed, 0x0071E5);
    let n_true = corrs.len();
    let n_out = ((fraction / (1.0 - fraction)) * n_true as f64).round() as usize;
    let (w, h) = corrs.image1_size().unwrap_or((2000.0, 1500.0));
    let mut rows: Vec<(Correspondence, bool)> = corrs
        .pairs()
        .iter()
        .zip(corrs.labels().map(|l| l.to_vec()).unwrap_or(vec![true; n_true]))
        .map(|(c, l)| (*c, l))
        .collect();
    for _ in 0..n_out {
        rows.push((
            Correspondence {
                x1: Vector2::new(
                    rng.random_range(-0.5 * w..0.5 * w),
                    rng.random_range(-0.5 * h..0.5 * h),
                ),
                x2: Vector2::new(
                    rng.random_range(-0.5 * w..0.5 * w),
                    rng.random_range(-0.5 * h..0.5 * h),
                ),
            },
            false,
        ));
    }
    // Fisher-Yates with the derived rng keeps this deterministic
    for i in (1..rows.len()).rev() {
        let j = rng.random_range(0..=i);
        rows.swap(i, j);
    }
    let (pairs, labels): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let mut out = CorrespondenceSet::new(pairs).expect("finite").with_labels(labels).expect("len");
    if let (Some(s1), Some(s2)) = (corrs.image1_size(), corrs.image2_size()) {
        out = out.with_image_sizes(s1, s2);
    }
    out
}

/// Angle in degrees between the estimated relative rotation and the true one
/// R2 R1^T.
pub fn relative_rotation_error(
    r_est: &Matrix3<f64>,
    r1_gt: &Matrix3<f64>,
    r2_gt: &Matrix3<f64>,
) -> f64 {
    geodesic_distance_raw(r_est, &(r2_gt * r1_gt.transpose()))
}

/// Angle in degrees between translation directions, in [0, 180]; direction
/// (not just axis) matters.
pub fn translation_angle_error(
    t_est: &Vector3<f64>,
    t_gt: &Vector3<f64>,
) -> Result<f64, GeometryError> {
    angle_deg(t_est, t_gt)
}

/// Errors of one pair solution against scene ground truth.
#[derive(Debug, Clone)]
pub struct PairErrorReport {
    pub d_r_deg: f64,
    pub d_t_deg: f64,
    pub d_f1: f64,
    pub d_f2: f64,
    /// Whether cheirality committed to a candidate.
    pub decided: bool,
    /// Fraction of front votes for the chosen candidate (camera 2).
    pub vote_ratio: f64,
}

pub fn evaluate_pair(scene: &SyntheticScene, solution: &PairSolution) -> PairErrorReport {
    let identity = Matrix3::identity();
    let (d_r_deg, d_t_deg, vote_ratio) = match solution.chosen_candidate() {
        Some(c) => (
            relative_rotation_error(&c.rotation, &identity, &scene.r2),
            translation_angle_error(&c.translation_dir, &scene.translation_direction())
                .unwrap_or(180.0),
            if solution.votes.valid > 0 {
                c.front_votes_both as f64 / solution.votes.valid as f64
            } else {
                0.0
            },
        ),
        None => (180.0, 180.0, 0.0),
    };
    PairErrorReport {
        d_r_deg,
        d_t_deg,
        d_f1: crate::averaging::delta_f(solution.f1, scene.k1.focal()),
        d_f2: crate::averaging::delta_f(solution.f2, scene.k2.focal()),
        decided: !matches!(solution.chosen, ChosenCandidate::Undecided),
        vote_ratio,
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub sigmas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub n_points: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self { sigmas: vec![0.0, 0.25, 0.5, 1.0, 2.0], trials: 100, seed: 0, n_points: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub sigma: f64,
    pub trial_count: usize,
    pub med_dr_deg: f64,
    pub med_dt_deg: f64,
    pub med_df1: f64,
    pub med_df2: f64,
    pub frac_dr_lt_5: f64,
    pub frac_dr_lt_10: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchmarkTable {
    pub rows: Vec<BenchmarkRow>,
}

impl BenchmarkTable {
    pub const CSV_HEADER: &'static str =
        "sigma,trial_count,med_dR_deg,med_dt_deg,med_df1,med_df2,frac_dR_lt_5,frac_dR_lt_10";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.sigma,
                r.trial_count,
                r.med_dr_deg,
                r.med_dt_deg,
                r.med_df1,
                r.med_df2,
                r.frac_dr_lt_5,
                r.frac_dr_lt_10
            ));
        }
        out
    }
}

fn median(values: &mut Vec<f64>) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Run `trials` random pairs per sigma and collect median errors. Trials
/// whose solver fails under heavy noise are skipped (they do not contribute
/// to the medians); the trial count records attempts.
pub fn run_pair_benchmark(cfg: &BenchmarkConfig) -> BenchmarkTable {
    let mut table = BenchmarkTable::default();
    if cfg.trials == 0 {
        return table;
    }
    let opts = CalibrateOptions::default();
    for (si, &sigma) in cfg.sigmas.iter().enumerate() {
        let mut drs = Vec::new();
        let mut dts = Vec::new();
        let mut df1s = Vec::new();
        let mut df2s = Vec::new();
        for trial in 0..cfg.trials {
            let scene_seed = cfg
                .seed
                .wrapping_mul(0x9e3779b97f4a7c15)
                .wrapping_add((si as u64) << 32)
                .wrapping_add(trial as u64);
            let mut scfg = SceneConfig::random(scene_seed);
            scfg.sigma = sigma;
            scfg.n_points = cfg.n_points;
            let Ok((scene, corrs)) = make_scene(&scfg) else { continue };
            let Ok(solution) = calibrate_from_matches(&corrs, &opts) else { continue };
            let report = evaluate_pair(&scene, &solution);
            drs.push(report.d_r_deg);
            dts.push(report.d_t_deg);
            df1s.push(report.d_f1);
            df2s.push(report.d_f2);
        }
        let n = drs.len().max(1) as f64;
        let frac5 = drs.iter().filter(|&&d| d < 5.0).count() as f64 / n;
        let frac10 = drs.iter().filter(|&&d| d < 10.0).count() as f64 / n;
        table.rows.push(BenchmarkRow {
            sigma,
            trial_count: cfg.trials,
            med_dr_deg: median(&mut drs),
            med_dt_deg: median(&mut dts),
            med_df1: median(&mut df1s),
            med_df2: median(&mut df2s),
            frac_dr_lt_5: frac5,
            frac_dr_lt_10: frac10,
        });
    }
    table
}

/// Noiseless fundamental matrix of the scene, estimated from the clean
/// correspondences. Kept here so callers get an exact F without touching the
/// ground-truth cameras.
pub fn scene_fundamental(
    corrs: &CorrespondenceSet,
) -> Result<crate::epipolar::FundamentalMatrix, crate::epipolar::EpipolarError> {
    estimate_f_eightpoint(corrs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epipolar::f_from_cameras;
    use approx::assert_relative_eq;

    #[test]
    fn noiseless_scene_satisfies_epipolar_constraint() {
        let cfg = SceneConfig { n_points: 50, seed: 3, ..SceneConfig::default() };
        let (scene, corrs) = make_scene(&cfg).unwrap();
        let f = f_from_cameras(&scene.camera1(), &scene.camera2()).unwrap();
        for i in 0..corrs.len() {
            let (x1, x2) = corrs.homogeneous(i);
            // coordinates are O(1e3), F has unit norm
            assert!(x2.dot(&(f.matrix() * x1)).abs() < 1e-10 * x1.norm() * x2.norm());
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let cfg = SceneConfig { n_points: 40, sigma: 0.7, seed: 9, ..SceneConfig::default() };
        let (s1, c1) = make_scene(&cfg).unwrap();
        let (s2, c2) = make_scene(&cfg).unwrap();
        assert_eq!(s1.points, s2.points);
        assert_eq!(c1, c2);
    }

    #[test]
    fn noise_std_matches_sigma() {
        let cfg = SceneConfig { n_points: 5000, sigma: 1.0, seed: 13, ..SceneConfig::default() };
        let (scene, noisy) = make_scene(&cfg).unwrap();
        let clean_cfg = SceneConfig { sigma: 0.0, ..cfg };
        let (_, clean) = make_scene(&clean_cfg).unwrap();
        assert_eq!(scene.points.len(), 5000);
        let mut sq = 0.0;
        let mut count = 0usize;
        for (a, b) in noisy.pairs().iter().zip(clean.pairs()) {
            sq += (a.x1 - b.x1).norm_squared() + (a.x2 - b.x2).norm_squared();
            count += 4;
        }
        let std = (sq / count as f64).sqrt();
        assert!((std - 1.0).abs() < 0.1, "empirical std {std}");
    }

    #[test]
    fn rotation_error_metrics() {
        let i = Matrix3::identity();
        let r2 = RotationMatrix::from_axis_angle_deg(&Vector3::y(), 20.0)
            .unwrap()
            .matrix()
            .clone_owned();
        assert!(relative_rotation_error(&r2, &i, &r2) < 1e-12);
        let extra = RotationMatrix::from_axis_angle_deg(&Vector3::z(), 5.0)
            .unwrap()
            .matrix()
            .clone_owned();
        assert_relative_eq!(relative_rotation_error(&(extra * r2), &i, &r2), 5.0, epsilon = 1e-9);
    }

    #[test]
    fn rotation_error_matches_quaternion_route() {
        let mut rng = trial_rng(31, 0);
        for _ in 0..20 {
            let axis = Vector3::new(
                rng.random_range(-1.0..1.0f64),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let r_est = RotationMatrix::from_axis_angle_deg(&axis, rng.random_range(-170.0..170.0))
                .unwrap();
            let r_gt = RotationMatrix::from_axis_angle_deg(&Vector3::y(), 33.0).unwrap();
            let ours = relative_rotation_error(
                r_est.matrix(),
                &Matrix3::identity(),
                r_gt.matrix(),
            );
            let qa = nalgebra::UnitQuaternion::from_rotation_matrix(
                &nalgebra::Rotation3::from_matrix_unchecked(*r_est.matrix()),
            );
            let qb = nalgebra::UnitQuaternion::from_rotation_matrix(
                &nalgebra::Rotation3::from_matrix_unchecked(*r_gt.matrix()),
            );
            let expected = qa.angle_to(&qb).to_degrees();
            assert_relative_eq!(ours, expected, epsilon = 1e-8);
        }
    }

    #[test]
    fn translation_angles() {
        let t = Vector3::new(1.0, 2.0, 3.0);
        assert!(translation_angle_error(&(t * 2.5), &t).unwrap() < 1e-7);
        assert_relative_eq!(translation_angle_error(&-t, &t).unwrap(), 180.0, epsilon = 1e-7);
        assert_relative_eq!(
            translation_angle_error(&Vector3::x(), &Vector3::y()).unwrap(),
            90.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn benchmark_zero_trials_empty_table() {
        let cfg = BenchmarkConfig { trials: 0, ..BenchmarkConfig::default() };
        let table = run_pair_benchmark(&cfg);
        assert!(table.rows.is_empty());
        assert_eq!(table.to_csv(), format!("{}\n", BenchmarkTable::CSV_HEADER));
    }

    #[test]
    fn error_metrics_invariant_under_global_similarity() {
        // applying a world similarity x -> s G x + d moves both ground-truth
        // cameras (R_i -> R_i G^T, C_i -> s G C_i + d) but leaves the relative
        // metrics unchanged
        let cfg = SceneConfig { n_points: 60, seed: 17, ..SceneConfig::default() };
        let (scene, corrs) = make_scene(&cfg).unwrap();
        let sol = calibrate_from_matches(&corrs, &CalibrateOptions::default()).unwrap();
        let cand = sol.chosen_candidate().expect("decided");

        let g = RotationMatrix::from_axis_angle_deg(&Vector3::new(0.3, 1.0, -0.2), 37.0)
            .unwrap()
            .matrix()
            .clone_owned();
        let scale = 3.7;
        let shift = Vector3::new(5.0, -2.0, 1.0);

        let r1 = Matrix3::identity();
        let c1 = Vector3::zeros();
        let (r1t, r2t) = (r1 * g.transpose(), scene.r2 * g.transpose());
        let (c1t, c2t) = (scale * g * c1 + shift, scale * g * scene.c2 + shift);

        let dr_before = relative_rotation_error(&cand.rotation, &r1, &scene.r2);
        let dr_after = relative_rotation_error(&cand.rotation, &r1t, &r2t);
        assert_relative_eq!(dr_before, dr_after, epsilon = 1e-9);

        let t_before = -scene.r2 * (scene.c2 - c1);
        let t_after = -r2t * (c2t - c1t);
        let dt_before = translation_angle_error(&cand.translation_dir, &t_before).unwrap();
        let dt_after = translation_angle_error(&cand.translation_dir, &t_after).unwrap();
        assert_relative_eq!(dt_before, dt_after, epsilon = 1e-9);
    }
}
