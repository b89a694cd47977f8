//! Homogeneous-geometry primitives shared by the rest of the crate.
//!
//! Conventions: world points are homogeneous 4-vectors, image points
//! homogeneous 3-vectors, cameras 3x4 matrices defined up to scale. For
//! deterministic comparisons, homogeneous quantities are canonicalized to
//! unit Frobenius norm with the largest-magnitude entry positive.

use nalgebra::{
    allocator::Allocator, DefaultAllocator, Dim, Matrix, Matrix3, Matrix3x4, Matrix4, OMatrix,
    Storage, Vector3, Vector4,
};
use thiserror::Error;

/// Homogeneous image point (x, y, w).
pub type Point2H = Vector3<f64>;
/// Homogeneous world point (x, y, z, w).
pub type Point3H = Vector4<f64>;

/// Lift a Euclidean image point to homogeneous coordinates.
pub fn point2h(x: f64, y: f64) -> Point2H {
    Vector3::new(x, y, 1.0)
}

/// Lift a Euclidean world point to homogeneous coordinates.
pub fn point3h(x: f64, y: f64, z: f64) -> Point3H {
    Vector4::new(x, y, z, 1.0)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("matrix is rank deficient (singular value ratio {0:.3e})")]
    RankDeficient(f64),
    #[error("left 3x3 camera block is singular")]
    SingularBlock,
    #[error("zero vector where a direction is required")]
    ZeroVector,
    #[error("focal length must be positive, got {0}")]
    InvalidFocal(f64),
    #[error("matrix is not a rotation (orthogonality residual {residual:.3e}, det {det:.6})")]
    NotARotation { residual: f64, det: f64 },
    #[error("matrix is not symmetric (residual {0:.3e})")]
    NotSymmetric(f64),
}

/// Scale a homogeneous matrix or vector to unit Frobenius norm and flip the
/// sign so the largest-magnitude entry is positive. Deterministic, so equal
/// projective entities compare bitwise-equal after canonicalization.
pub(crate) fn canonicalized<R, C, S>(m: &Matrix<f64, R, C, S>) -> OMatrix<f64, R, C>
where
    R: Dim,
    C: Dim,
    S: Storage<f64, R, C>,
    DefaultAllocator: Allocator<R, C>,
{
    let norm = m.norm();
    let mut out = m.clone_owned();
    if norm == 0.0 {
        return out;
    }
    out /= norm;
    let mut best = 0.0f64;
    let mut best_sign = 1.0f64;
    for &v in out.iter() {
        if v.abs() > best {
            best = v.abs();
            best_sign = v.signum();
        }
    }
    if best_sign < 0.0 {
        out = -out;
    }
    out
}

/// Whether the camera matrix refers to a projective or a metric frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraFrame {
    Projective,
    Metric,
}

/// A 3x4 homogeneous projection matrix of rank 3.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraMatrix {
    matrix: Matrix3x4<f64>,
    frame: CameraFrame,
}

impl CameraMatrix {
    pub fn new(matrix: Matrix3x4<f64>, frame: CameraFrame) -> Result<Self, GeometryError> {
        let svd = matrix.svd(false, false);
        let s = &svd.singular_values;
        let ratio = s[2] / s[0].max(f64::MIN_POSITIVE);
        if !ratio.is_finite() || ratio < 1e-12 {
            return Err(GeometryError::RankDeficient(ratio));
        }
        Ok(Self { matrix, frame })
    }

    pub fn projective(matrix: Matrix3x4<f64>) -> Result<Self, GeometryError> {
        Self::new(matrix, CameraFrame::Projective)
    }

    pub fn metric(matrix: Matrix3x4<f64>) -> Result<Self, GeometryError> {
        Self::new(matrix, CameraFrame::Metric)
    }

    /// The canonical first camera [I | 0].
    pub fn identity(frame: CameraFrame) -> Self {
        let mut m = Matrix3x4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
        Self { matrix: m, frame }
    }

    pub fn matrix(&self) -> &Matrix3x4<f64> {
        &self.matrix
    }

    pub fn frame(&self) -> CameraFrame {
        self.frame
    }

    /// The left 3x3 block M of P = [M | m].
    pub fn left_block(&self) -> Matrix3<f64> {
        self.matrix.fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// The fourth column m of P = [M | m].
    pub fn translation_column(&self) -> Vector3<f64> {
        self.matrix.column(3).into_owned()
    }

    /// Project a homogeneous world point.
    pub fn project(&self, x: &Point3H) -> Point2H {
        self.matrix * x
    }

    /// Same camera, rescaled to unit norm with canonical sign.
    pub fn canonicalized(&self) -> Self {
        Self {
            matrix: canonicalized(&self.matrix),
            frame: self.frame,
        }
    }
}

/// Internal calibration with a single focal length, realized as diag(f, f, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationMatrix {
    f: f64,
}

impl CalibrationMatrix {
    pub fn new(f: f64) -> Result<Self, GeometryError> {
        if !(f > 0.0) || !f.is_finite() {
            return Err(GeometryError::InvalidFocal(f));
        }
        Ok(Self { f })
    }

    pub fn focal(&self) -> f64 {
        self.f
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(self.f, self.f, 1.0))
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(1.0 / self.f, 1.0 / self.f, 1.0))
    }
}

/// A proper rotation: orthonormal with determinant +1 (both to 1e-9).
#[derive(Debug, Clone, PartialEq)]
pub struct RotationMatrix {
    m: Matrix3<f64>,
}

impl RotationMatrix {
    pub const ORTHONORMALITY_TOL: f64 = 1e-9;

    pub fn new(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let residual = (m.transpose() * m - Matrix3::identity()).norm();
        let det = m.determinant();
        if residual > Self::ORTHONORMALITY_TOL || (det - 1.0).abs() > Self::ORTHONORMALITY_TOL {
            return Err(GeometryError::NotARotation { residual, det });
        }
        Ok(Self { m })
    }

    pub fn identity() -> Self {
        Self { m: Matrix3::identity() }
    }

    /// Nearest rotation to an approximately orthonormal matrix, via SVD.
    pub fn project(m: &Matrix3<f64>) -> Result<Self, GeometryError> {
        let svd = m.svd(true, true);
        let u = svd.u.ok_or(GeometryError::SingularBlock)?;
        let vt = svd.v_t.ok_or(GeometryError::SingularBlock)?;
        let mut r = u * vt;
        if r.determinant() < 0.0 {
            // flip the column associated with the smallest singular value
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * vt;
        }
        Self::new(r)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    /// Rotation of `angle_deg` degrees about `axis`.
    pub fn from_axis_angle_deg(axis: &Vector3<f64>, angle_deg: f64) -> Result<Self, GeometryError> {
        let n = axis.norm();
        if n == 0.0 {
            return Err(GeometryError::ZeroVector);
        }
        let w = axis * (angle_deg.to_radians() / n);
        let q = nalgebra::UnitQuaternion::from_scaled_axis(w);
        Ok(Self { m: q.to_rotation_matrix().into_inner() })
    }
}

/// A 4x4 symmetric dual quadric.
#[derive(Debug, Clone, PartialEq)]
pub struct DualQuadric {
    m: Matrix4<f64>,
}

impl DualQuadric {
    pub fn new(m: Matrix4<f64>) -> Result<Self, GeometryError> {
        let residual = (m - m.transpose()).norm();
        if residual > 1e-9 * m.norm().max(1.0) {
            return Err(GeometryError::NotSymmetric(residual));
        }
        // symmetrize round-off
        Ok(Self { m: (m + m.transpose()) * 0.5 })
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }
}

/// The absolute dual quadric in a metric frame: diag(1, 1, 1, 0).
pub fn dac_canonical() -> DualQuadric {
    DualQuadric {
        m: Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, 1.0, 0.0)),
    }
}

/// Cross-product operator: skew(v) * w == v x w.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -v[2], v[1], //
        v[2], 0.0, -v[0], //
        -v[1], v[0], 0.0,
    )
}

/// Projection of a dual quadric to the image plane: P Q P^T, symmetrized.
pub fn project_dual_quadric(p: &CameraMatrix, q: &DualQuadric) -> Matrix3<f64> {
    let w = p.matrix() * q.matrix() * p.matrix().transpose();
    (w + w.transpose()) * 0.5
}

/// Center of projection, the right null vector of P, with the last
/// coordinate normalized to 1 when finite.
pub fn camera_center(p: &CameraMatrix) -> Result<Point3H, GeometryError> {
    // pad with a zero row so the full right singular basis is available
    let mut padded = Matrix4::zeros();
    padded.fixed_view_mut::<3, 4>(0, 0).copy_from(p.matrix());
    let svd = padded.svd(false, true);
    let s = &svd.singular_values;
    if s[2] / s[0].max(f64::MIN_POSITIVE) < 1e-12 {
        return Err(GeometryError::RankDeficient(s[2] / s[0]));
    }
    let vt = svd.v_t.ok_or(GeometryError::SingularBlock)?;
    let mut c: Vector4<f64> = vt.row(3).transpose();
    if c[3].abs() > 1e-12 * c.norm() {
        c /= c[3];
    }
    Ok(c)
}

/// Inhomogeneous center for a camera with nonsingular left block.
pub fn camera_center_euclidean(p: &CameraMatrix) -> Result<Vector3<f64>, GeometryError> {
    let m = p.left_block();
    let inv = m.try_inverse().ok_or(GeometryError::SingularBlock)?;
    Ok(-inv * p.translation_column())
}

/// RQ decomposition of a 3x3 matrix: M = R Q with R upper triangular and Q
/// orthogonal. Built from the QR decomposition of the row-reversed transpose.
fn rq3(m: &Matrix3<f64>) -> (Matrix3<f64>, Matrix3<f64>) {
    let j = Matrix3::new(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0);
    let qr = ((j * m).transpose()).qr();
    let q1 = qr.q();
    let r1 = qr.r();
    let r = j * r1.transpose() * j;
    let q = j * q1.transpose();
    (r, q)
}

/// Decomposition P = [K R | -K R C] up to scale, with K upper triangular,
/// positive diagonal, K[2,2] = 1, and det R = +1.
pub fn decompose_krc(
    p: &CameraMatrix,
) -> Result<(Matrix3<f64>, RotationMatrix, Vector3<f64>), GeometryError> {
    let m = p.left_block();
    let det = m.determinant();
    if det.abs() < 1e-12 * m.norm().powi(3).max(f64::MIN_POSITIVE) {
        return Err(GeometryError::SingularBlock);
    }
    // Decompose sign(det) * M so the rotation comes out proper.
    let (mut k, mut r) = rq3(&(m * det.signum()));
    for i in 0..3 {
        if k[(i, i)] < 0.0 {
            for row in 0..3 {
                k[(row, i)] = -k[(row, i)];
            }
            for col in 0..3 {
                r[(i, col)] = -r[(i, col)];
            }
        }
    }
    let c = camera_center_euclidean(p)?;
    let k = k / k[(2, 2)];
    Ok((k, RotationMatrix::project(&r)?, c))
}

/// Unit vector along the principal axis, pointing to the front of the camera:
/// det(M) * m3 where m3 is the third row of the left block.
pub fn viewing_direction(p: &CameraMatrix) -> Result<Vector3<f64>, GeometryError> {
    let m = p.left_block();
    let det = m.determinant();
    if det.abs() < 1e-14 * m.norm().powi(3).max(f64::MIN_POSITIVE) {
        return Err(GeometryError::SingularBlock);
    }
    let v = m.row(2).transpose() * det;
    Ok(v / v.norm())
}

/// Angle between two nonzero vectors, in degrees, in [0, 180].
pub fn angle_deg(u: &Vector3<f64>, v: &Vector3<f64>) -> Result<f64, GeometryError> {
    let nu = u.norm();
    let nv = v.norm();
    if nu == 0.0 || nv == 0.0 {
        return Err(GeometryError::ZeroVector);
    }
    let c = (u.dot(v) / (nu * nv)).clamp(-1.0, 1.0);
    Ok(c.acos().to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let angle = rng.random_range(-179.0..179.0);
        RotationMatrix::from_axis_angle_deg(&axis, angle)
            .unwrap()
            .matrix()
            .clone()
    }

    #[test]
    fn skew_zero_vector_gives_zero_matrix() {
        assert_eq!(skew(&Vector3::zeros()), Matrix3::zeros());
    }

    #[test]
    fn skew_matches_cross_product() {
        let v = Vector3::new(1.0, 2.0, 3.0);
        let w = Vector3::new(4.0, 5.0, 6.0);
        let expected = v.cross(&w);
        assert_eq!(skew(&v) * w, expected);
        assert_eq!(expected, Vector3::new(-3.0, 6.0, -3.0));
    }

    #[test]
    fn skew_annihilates_its_own_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let v = Vector3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            );
            assert!((skew(&v) * v).norm() < 1e-14);
        }
    }

    #[test]
    fn dac_is_diag_1110_symmetric_rank3() {
        let q = dac_canonical();
        assert_eq!(
            q.matrix(),
            &Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, 1.0, 0.0))
        );
        assert_eq!(q.matrix() - q.matrix().transpose(), Matrix4::zeros());
        assert_eq!(q.matrix().rank(1e-12), 3);
    }

    #[test]
    fn project_dac_identity_camera() {
        let p = CameraMatrix::identity(CameraFrame::Metric);
        let w = project_dual_quadric(&p, &dac_canonical());
        assert_relative_eq!(w, Matrix3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn project_dac_calibrated_camera_is_kkt() {
        let k = CalibrationMatrix::new(1234.5).unwrap().matrix();
        let mut m = Matrix3x4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&k);
        let p = CameraMatrix::metric(m).unwrap();
        let w = project_dual_quadric(&p, &dac_canonical());
        assert_relative_eq!(w, k * k.transpose(), epsilon = 1e-9);
    }

    #[test]
    fn projected_quadric_is_exactly_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let m = Matrix3x4::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let p = match CameraMatrix::projective(m) {
                Ok(p) => p,
                Err(_) => continue,
            };
            let q = Matrix4::from_fn(|i, j| ((i * 4 + j) as f64).sin());
            let q = DualQuadric::new((q + q.transpose()) * 0.5).unwrap();
            let w = project_dual_quadric(&p, &q);
            assert_eq!(w, w.transpose());
        }
    }

    #[test]
    fn center_of_identity_camera_is_origin() {
        let p = CameraMatrix::identity(CameraFrame::Metric);
        let c = camera_center(&p).unwrap();
        assert_relative_eq!(c, Vector4::new(0.0, 0.0, 0.0, 1.0), epsilon = 1e-12);
    }

    #[test]
    fn center_matches_construction_and_nullspace_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let r = random_rotation(&mut rng);
            let c = Vector3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            );
            let mut m = Matrix3x4::zeros();
            m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
            m.set_column(3, &(-r * c));
            let p = CameraMatrix::metric(m).unwrap();
            let ch = camera_center(&p).unwrap();
            assert_relative_eq!(ch.fixed_rows::<3>(0).into_owned(), c, epsilon = 1e-9);
            assert!((p.matrix() * ch).norm() < 1e-10);
        }
    }

    #[test]
    fn krc_recomposes_and_has_positive_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let f = rng.random_range(500.0..2000.0);
            let k_true = CalibrationMatrix::new(f).unwrap().matrix();
            let r_true = random_rotation(&mut rng);
            let c_true = Vector3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let mut m = Matrix3x4::zeros();
            m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(k_true * r_true));
            m.set_column(3, &(-(k_true * r_true) * c_true));
            let scale = rng.random_range(0.1..10.0) * if rng.random_bool(0.5) { -1.0 } else { 1.0 };
            let p = CameraMatrix::metric(m * scale).unwrap();

            let (k, r, c) = decompose_krc(&p).unwrap();
            assert!(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0 && k[(2, 2)] > 0.0);
            assert_relative_eq!(c, c_true, epsilon = 1e-8);

            // recompose up to scale
            let mut recomposed = Matrix3x4::zeros();
            recomposed
                .fixed_view_mut::<3, 3>(0, 0)
                .copy_from(&(k * r.matrix()));
            recomposed.set_column(3, &(-(k * r.matrix()) * c));
            let a = canonicalized(p.matrix());
            let b = canonicalized(&recomposed);
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn krc_of_identity_camera() {
        let p = CameraMatrix::identity(CameraFrame::Metric);
        let (k, r, c) = decompose_krc(&p).unwrap();
        assert_relative_eq!(k, Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(*r.matrix(), Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(c, Vector3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn viewing_direction_identity_and_sign_invariance() {
        let p = CameraMatrix::identity(CameraFrame::Metric);
        assert_relative_eq!(
            viewing_direction(&p).unwrap(),
            Vector3::new(0.0, 0.0, 1.0),
            epsilon = 1e-15
        );

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let m = Matrix3x4::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let p = match CameraMatrix::projective(m) {
                Ok(p) => p,
                Err(_) => continue,
            };
            let neg = CameraMatrix::projective(-m).unwrap();
            let v1 = viewing_direction(&p).unwrap();
            let v2 = viewing_direction(&neg).unwrap();
            assert_relative_eq!(v1, v2, epsilon = 1e-12);
        }
    }

    #[test]
    fn viewing_direction_flipped_camera() {
        let r = RotationMatrix::from_axis_angle_deg(&Vector3::x(), 180.0).unwrap();
        let mut m = Matrix3x4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(r.matrix());
        let p = CameraMatrix::metric(m).unwrap();
        assert_relative_eq!(
            viewing_direction(&p).unwrap(),
            Vector3::new(0.0, 0.0, -1.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn angles() {
        assert_relative_eq!(
            angle_deg(&Vector3::x(), &Vector3::y()).unwrap(),
            90.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            angle_deg(&Vector3::x(), &Vector3::x()).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            angle_deg(&Vector3::new(1.0, 1.0, 0.0), &Vector3::x()).unwrap(),
            45.0,
            epsilon = 1e-12
        );
        assert!(angle_deg(&Vector3::zeros(), &Vector3::x()).is_err());
    }

    #[test]
    fn rotation_matrix_rejects_non_rotations() {
        assert!(RotationMatrix::new(Matrix3::identity() * 2.0).is_err());
        let mut reflection = Matrix3::identity();
        reflection[(0, 0)] = -1.0;
        assert!(RotationMatrix::new(reflection).is_err());
    }

    #[test]
    fn camera_matrix_rejects_rank_deficient() {
        let mut m = Matrix3x4::zeros();
        m[(0, 0)] = 1.0;
        m[(1, 1)] = 1.0;
        assert!(CameraMatrix::projective(m).is_err());
    }
}
