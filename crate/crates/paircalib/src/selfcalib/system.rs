//! The linear DIAC system for a canonical projective pair, its
//! structure-exploiting reduction, and the quadratic solution.
//!
//! With camera 1 at [I | 0] and K_i = diag(f_i, f_i, 1), projecting the
//! absolute dual quadric into image 2 yields six equations that are linear in
//! the unknown complexes
//!
//!   x = (f1^2, f2^2, f1^2 p1^2 + f1^2 p2^2 + p3^2, p3, f1^2 p1, f1^2 p2)
//!
//! where (p, 1) is the plane at infinity in the projective frame. The six
//! rows come, in order, from the DIAC elements (2,2), (2,3), (1,3), (1,1),
//! (1,2), (3,3). Only the first five are usable without introducing the
//! homogeneous-scale constants, so the (3,3) row is never consumed by the
//! solve.

use super::CalibError;
use crate::geometry::CameraMatrix;
use nalgebra::{Matrix3x4, Matrix4, RowVector3, SMatrix, Vector2, Vector3};

/// DIAC element (row, col), 1-based, that each system row was derived from.
pub const ROW_TAGS: [(usize, usize); 6] = [(2, 2), (2, 3), (1, 3), (1, 1), (1, 2), (3, 3)];

/// The 6x7 augmented matrix [A | b] together with the camera it was built
/// from (the reduction needs the camera's left-block rows).
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem {
    m: SMatrix<f64, 6, 7>,
    source: Matrix3x4<f64>,
}

impl AugmentedSystem {
    pub fn matrix(&self) -> &SMatrix<f64, 6, 7> {
        &self.m
    }

    /// Coefficient block A (first six columns).
    pub fn coefficients(&self) -> SMatrix<f64, 6, 6> {
        self.m.fixed_view::<6, 6>(0, 0).into_owned()
    }

    /// Right-hand side b (seventh column).
    pub fn rhs(&self) -> SMatrix<f64, 6, 1> {
        self.m.column(6).into_owned()
    }

    pub fn row_tags(&self) -> &'static [(usize, usize); 6] {
        &ROW_TAGS
    }

    pub fn source_camera(&self) -> &Matrix3x4<f64> {
        &self.source
    }
}

/// One row of [A | b] from the DIAC element formed by rows u and w of P2.
/// `f2_coeff` is -1 for the diagonal elements (1,1) and (2,2), `b_extra` is
/// +1 for the (3,3) element whose target value is 1.
fn system_row(u: &[f64; 4], w: &[f64; 4], f2_coeff: f64, b_extra: f64) -> [f64; 7] {
    [
        u[0] * w[0] + u[1] * w[1],
        f2_coeff,
        u[3] * w[3],
        -(u[2] * w[3] + u[3] * w[2]),
        -(u[0] * w[3] + u[3] * w[0]),
        -(u[1] * w[3] + u[3] * w[1]),
        -u[2] * w[2] + b_extra,
    ]
}

/// Build the 6x7 system of the DIAC projection for the given second camera.
pub fn build_augmented_system(p2: &CameraMatrix) -> AugmentedSystem {
    let p = p2.matrix();
    let r = |i: usize| [p[(i, 0)], p[(i, 1)], p[(i, 2)], p[(i, 3)]];
    let (r1, r2, r3) = (r(0), r(1), r(2));
    let rows = [
        system_row(&r2, &r2, -1.0, 0.0), // (2,2)
        system_row(&r2, &r3, 0.0, 0.0),  // (2,3)
        system_row(&r1, &r3, 0.0, 0.0),  // (1,3)
        system_row(&r1, &r1, -1.0, 0.0), // (1,1)
        system_row(&r1, &r2, 0.0, 0.0),  // (1,2)
        system_row(&r3, &r3, 0.0, 1.0),  // (3,3)
    ];
    let mut m = SMatrix::<f64, 6, 7>::zeros();
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    AugmentedSystem { m, source: *p }
}

/// The dual quadric H Q*inf H^T expressed in the unknown complexes; its
/// projection by P2 reproduces the system residuals.
pub fn quadric_from_unknowns(x: &UnknownVector) -> Matrix4<f64> {
    let v = &x.v;
    Matrix4::new(
        v[0], 0.0, 0.0, -v[4], //
        0.0, v[0], 0.0, -v[5], //
        0.0, 0.0, 1.0, -v[3], //
        -v[4], -v[5], -v[3], v[2],
    )
}

/// The five-equation system after the structured elimination, in the
/// row-echelon shape
///
/// ```text
/// [ 1 0 0 0 0 0 | b1 ]
/// [ 0 1 0 0 0 0 | b2 ]
/// [ 0 0 1 0 0 0 | b3 ]
/// [ 0 0 0 1 0 c | b4 ]
/// [ 0 0 0 0 1 d | b5 ]
/// ```
///
/// The zeros in column 6 of rows 1-3 are structural: they exist because the
/// retained rows mix the camera's left-block rows g1, g2, g3 with g3 linearly
/// dependent on g1, g2 for a canonical pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedSystem {
    pub b: [f64; 5],
    pub c: f64,
    pub d: f64,
}

impl ReducedSystem {
    /// The reconstructed 5x7 echelon matrix.
    pub fn echelon(&self) -> SMatrix<f64, 5, 7> {
        let mut m = SMatrix::<f64, 5, 7>::zeros();
        for i in 0..5 {
            m[(i, i)] = 1.0;
            m[(i, 6)] = self.b[i];
        }
        m[(3, 5)] = self.c;
        m[(4, 5)] = self.d;
        m
    }

    /// Residuals of the five reduced equations at the given unknowns.
    pub fn residual(&self, x: &UnknownVector) -> f64 {
        let v = &x.v;
        let r = [
            v[0] - self.b[0],
            v[1] - self.b[1],
            v[2] - self.b[2],
            v[3] + self.c * v[5] - self.b[3],
            v[4] + self.d * v[5] - self.b[4],
        ];
        r.iter().map(|e| e * e).sum::<f64>().sqrt()
    }
}

/// Degeneracy threshold for elimination pivots, relative to row magnitude.
const PIVOT_TOL: f64 = 1e-10;
/// Acceptance threshold for the structural left-block rank-2 relation.
const STRUCTURE_TOL: f64 = 1e-8;

/// Reduce the system to the echelon form using the problem structure: the
/// retained rows' entries over the unknowns (p3, f1^2 p1, f1^2 p2) are
/// combinations of the camera's left-block rows, and for a canonical pair the
/// third block row is itself a combination of the first two. Consumes only
/// the first five rows; the (3,3) row never enters the solve.
pub fn structured_reduce(sys: &AugmentedSystem) -> Result<ReducedSystem, CalibError> {
    let p = sys.source_camera();
    let g1: RowVector3<f64> = p.fixed_view::<1, 3>(0, 0).into_owned();
    let g2: RowVector3<f64> = p.fixed_view::<1, 3>(1, 0).into_owned();
    let g3: RowVector3<f64> = p.fixed_view::<1, 3>(2, 0).into_owned();
    let (p14, p24, p34) = (p[(0, 3)], p[(1, 3)], p[(2, 3)]);

    // g3 = d1 g1 + d2 g2 (least squares over the three components)
    let basis = nalgebra::Matrix3x2::from_columns(&[g1.transpose(), g2.transpose()]);
    let svd = basis.svd(true, true);
    if svd.singular_values[1] / svd.singular_values[0].max(f64::MIN_POSITIVE) < PIVOT_TOL {
        return Err(CalibError::DegenerateConfiguration(
            "left-block rows g1, g2 are linearly dependent",
        ));
    }
    let d: Vector2<f64> = svd
        .solve(&g3.transpose(), 0.0)
        .map_err(|_| CalibError::DegenerateConfiguration("rank relation solve failed"))?;
    let (d1, d2) = (d[0], d[1]);
    let block_scale = g1.norm().max(g2.norm()).max(g3.norm()).max(f64::MIN_POSITIVE);
    let structure_residual = (g3 - (g1 * d1 + g2 * d2)).norm() / block_scale;
    if structure_residual > STRUCTURE_TOL {
        return Err(CalibError::StructureViolation { residual: structure_residual });
    }

    // Each retained row's coefficients over (x4, x5, x6) equal
    // alpha * g1 + beta * g2 once g3 is substituted; the (alpha, beta) pairs
    // follow from the row construction.
    let alphabeta = [
        (0.0, -2.0 * p24),
        (-p24 * d1, -p34 - p24 * d2),
        (-p34 - p14 * d1, -p14 * d2),
        (-2.0 * p14, 0.0),
        (-p24, -p14),
    ];

    // consistency of the substitution against the literal system entries
    for (i, (alpha, beta)) in alphabeta.iter().enumerate() {
        let gamma = g1 * *alpha + g2 * *beta;
        // column mapping: x4 (p3) carries component 3, x5 (f1^2 p1)
        // component 1, x6 (f1^2 p2) component 2
        let expected = [gamma[2], gamma[0], gamma[1]];
        for (k, ev) in expected.iter().enumerate() {
            let actual = sys.m[(i, 3 + k)];
            if (actual - ev).abs() > STRUCTURE_TOL * block_scale.powi(2).max(1.0) {
                return Err(CalibError::StructureViolation {
                    residual: (actual - ev).abs(),
                });
            }
        }
    }

    // rows as [r | alpha beta | psi] with r over (x1, x2, x3), equilibrated
    // by exact powers of two so pivot comparisons see balanced magnitudes
    let mut rows = [[0.0f64; 6]; 5];
    for i in 0..5 {
        rows[i] = [
            sys.m[(i, 0)],
            sys.m[(i, 1)],
            sys.m[(i, 2)],
            alphabeta[i].0,
            alphabeta[i].1,
            sys.m[(i, 6)],
        ];
        let max = rows[i].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if max > 0.0 {
            let scale = (-max.log2().round()).exp2();
            for v in rows[i].iter_mut() {
                *v *= scale;
            }
        }
    }

    // pick the two rows with the best-conditioned (alpha, beta) block
    let mut best = (0usize, 1usize, 0.0f64);
    for a in 0..5 {
        for b in (a + 1)..5 {
            let det = rows[a][3] * rows[b][4] - rows[a][4] * rows[b][3];
            if det.abs() > best.2 {
                best = (a, b, det.abs());
            }
        }
    }
    let ab_scale = rows
        .iter()
        .map(|r| r[3].abs().max(r[4].abs()))
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    if best.2 < PIVOT_TOL * ab_scale * ab_scale {
        return Err(CalibError::DegenerateConfiguration(
            "gamma block of the retained rows is rank deficient",
        ));
    }
    let (pa, pb) = (best.0, best.1);
    let det = rows[pa][3] * rows[pb][4] - rows[pa][4] * rows[pb][3];

    // eliminate (alpha, beta) from the remaining three rows
    let mut pure = Vec::with_capacity(3);
    for k in 0..5 {
        if k == pa || k == pb {
            continue;
        }
        let (ak, bk) = (rows[k][3], rows[k][4]);
        let la = (ak * rows[pb][4] - bk * rows[pb][3]) / det;
        let lb = (bk * rows[pa][3] - ak * rows[pa][4]) / det;
        let mut out = [0.0f64; 4];
        for (j, slot) in [0usize, 1, 2, 5].iter().enumerate() {
            out[j] = rows[k][*slot] - la * rows[pa][*slot] - lb * rows[pb][*slot];
        }
        pure.push(out);
    }

    // solve the 3x3 block for (x1, x2, x3) by Gauss-Jordan with row pivoting
    // and exact power-of-two column equilibration
    let mut m3 = [[pure[0][0], pure[0][1], pure[0][2], pure[0][3]],
                  [pure[1][0], pure[1][1], pure[1][2], pure[1][3]],
                  [pure[2][0], pure[2][1], pure[2][2], pure[2][3]]];
    let mut col_scale = [1.0f64; 3];
    for col in 0..3 {
        let max = (0..3).fold(0.0f64, |a, r| a.max(m3[r][col].abs()));
        if max > 0.0 {
            let s = (-max.log2().round()).exp2();
            col_scale[col] = s;
            for row in m3.iter_mut() {
                row[col] *= s;
            }
        }
    }
    for col in 0..3 {
        let (mut pivot_row, mut pivot_val) = (col, m3[col][col].abs());
        for row in (col + 1)..3 {
            if m3[row][col].abs() > pivot_val {
                pivot_row = row;
                pivot_val = m3[row][col].abs();
            }
        }
        let scale = m3.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1e-300);
        if pivot_val < PIVOT_TOL * scale {
            return Err(CalibError::DegenerateConfiguration(
                "gamma-free block is rank deficient in (f1^2, f2^2, x3)",
            ));
        }
        m3.swap(col, pivot_row);
        let inv = 1.0 / m3[col][col];
        for v in m3[col].iter_mut() {
            *v *= inv;
        }
        for row in 0..3 {
            if row != col {
                let factor = m3[row][col];
                for j in 0..4 {
                    m3[row][j] -= factor * m3[col][j];
                }
            }
        }
    }
    // undo the column scaling: solving A diag(s) y = b gives x = diag(s) y
    let (b1, b2, b3) = (
        m3[0][3] * col_scale[0],
        m3[1][3] * col_scale[1],
        m3[2][3] * col_scale[2],
    );

    // back-substitute into the two gamma rows; their unknown part is
    // alpha g1 + beta g2 over (x4, x5, x6)
    let mut gamma_rows = [[0.0f64; 4]; 2];
    for (slot, &k) in [pa, pb].iter().enumerate() {
        let gamma = g1 * rows[k][3] + g2 * rows[k][4];
        let psi = rows[k][5] - rows[k][0] * b1 - rows[k][1] * b2 - rows[k][2] * b3;
        gamma_rows[slot] = [gamma[2], gamma[0], gamma[1], psi];
    }
    // normalize to [1 0 c | b4; 0 1 d | b5] over (x4, x5, x6)
    let det2 = gamma_rows[0][0] * gamma_rows[1][1] - gamma_rows[0][1] * gamma_rows[1][0];
    let g_scale = gamma_rows
        .iter()
        .flat_map(|r| r[..3].iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    if det2.abs() < PIVOT_TOL * g_scale * g_scale {
        return Err(CalibError::DegenerateConfiguration(
            "gamma rows cannot be normalized over (p3, f1^2 p1)",
        ));
    }
    let inv = 1.0 / det2;
    let row0 = [
        inv * (gamma_rows[1][1] * gamma_rows[0][2] - gamma_rows[0][1] * gamma_rows[1][2]),
        inv * (gamma_rows[1][1] * gamma_rows[0][3] - gamma_rows[0][1] * gamma_rows[1][3]),
    ];
    let row1 = [
        inv * (gamma_rows[0][0] * gamma_rows[1][2] - gamma_rows[1][0] * gamma_rows[0][2]),
        inv * (gamma_rows[0][0] * gamma_rows[1][3] - gamma_rows[1][0] * gamma_rows[0][3]),
    ];

    Ok(ReducedSystem {
        b: [b1, b2, b3, row0[1], row1[1]],
        c: row0[0],
        d: row1[0],
    })
}

/// The six unknown complexes
/// (f1^2, f2^2, f1^2 p1^2 + f1^2 p2^2 + p3^2, p3, f1^2 p1, f1^2 p2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnknownVector {
    v: [f64; 6],
}

impl UnknownVector {
    pub fn new(v: [f64; 6]) -> Self {
        Self { v }
    }

    pub fn as_array(&self) -> &[f64; 6] {
        &self.v
    }

    pub fn f1_squared(&self) -> f64 {
        self.v[0]
    }

    /// The second slot: f2^2 scaled by the squared homogeneous-scale constant
    /// of the input pair (see the bidirectional solve).
    pub fn scaled_f2_squared(&self) -> f64 {
        self.v[1]
    }

    pub fn p3(&self) -> f64 {
        self.v[3]
    }

    /// Plane-at-infinity coordinates p = (p1, p2, p3).
    pub fn plane(&self) -> Vector3<f64> {
        Vector3::new(self.v[4] / self.v[0], self.v[5] / self.v[0], self.v[3])
    }

    /// Relative inconsistency of the quadratic complex:
    /// x3 vs (x5^2 + x6^2) / x1 + x4^2.
    pub fn consistency_residual(&self) -> f64 {
        let recomputed = (self.v[4].powi(2) + self.v[5].powi(2)) / self.v[0] + self.v[3].powi(2);
        (self.v[2] - recomputed).abs() / self.v[2].abs().max(1.0)
    }
}

/// Relative tolerance for clamping a slightly negative discriminant to zero.
const DISCRIMINANT_CLAMP: f64 = 1e-8;

/// Solve the reduced system: f1^2 and the scaled f2^2 are read off directly,
/// p1 and p3 are eliminated through rows 5 and 4, and the quadratic
/// consistency of the third complex yields two roots for f1^2 p2. Returns the
/// two unknown vectors (roots ordered ascending in f1^2 p2); they share the
/// first three coordinates.
pub fn solve_unknowns(red: &ReducedSystem) -> Result<(UnknownVector, UnknownVector), CalibError> {
    let [b1, b2, b3, b4, b5] = red.b;
    if !(b1 > 0.0) {
        return Err(CalibError::NegativeFocalSquare { value: b1 });
    }
    if !(b2 > 0.0) {
        return Err(CalibError::NegativeScaledFocal { value: b2 });
    }
    let (c, d) = (red.c, red.d);

    // substitute x5 = b5 - d u and x4 = b4 - c u with u = f1^2 p2 into
    // (x5^2 + u^2)/b1 + x4^2 = b3
    let q2 = (1.0 + d * d) / b1 + c * c;
    let q1 = -2.0 * (d * b5 / b1 + c * b4);
    let q0 = b5 * b5 / b1 + b4 * b4 - b3;
    let mut disc = q1 * q1 - 4.0 * q2 * q0;
    let scale = (q1 * q1).max((4.0 * q2 * q0).abs()).max(f64::MIN_POSITIVE);
    if disc < 0.0 {
        if disc.abs() <= DISCRIMINANT_CLAMP * scale {
            disc = 0.0;
        } else {
            return Err(CalibError::NegativeDiscriminant { discriminant: disc, scale });
        }
    }
    // cancellation-free root pairing: the root on q1's side comes from the
    // stable numerator, the other through Vieta
    let sq = disc.sqrt();
    let mut u_roots = if q1 >= 0.0 {
        let q = -0.5 * (q1 + sq);
        [q / q2, if q != 0.0 { q0 / q } else { 0.0 }]
    } else {
        let q = -0.5 * (q1 - sq);
        [q / q2, if q != 0.0 { q0 / q } else { 0.0 }]
    };
    if u_roots[0] > u_roots[1] {
        u_roots.swap(0, 1);
    }

    let build = |u: f64| UnknownVector::new([b1, b2, b3, b4 - c * u, b5 - d * u, u]);
    Ok((build(u_roots[0]), build(u_roots[1])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epipolar::{canonical_pair, trial_rng, FundamentalMatrix};
    use crate::geometry::{CalibrationMatrix, CameraFrame, RotationMatrix};
    use approx::assert_relative_eq;
    use nalgebra::{Matrix3, Matrix4, SMatrix, Vector3, Vector4};
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    /// Plain Gauss-Jordan reduction of the first five rows over all seven
    /// columns: the independent oracle for the structured path. Returns the
    /// 5x7 reduced row echelon form (pivots expected on columns 0..5).
    fn rref_oracle(sys: &AugmentedSystem) -> SMatrix<f64, 5, 7> {
        let mut m = SMatrix::<f64, 5, 7>::zeros();
        m.copy_from(&sys.matrix().fixed_view::<5, 7>(0, 0));
        let mut row = 0usize;
        for col in 0..6 {
            if row == 5 {
                break;
            }
            let mut best = (row, m[(row, col)].abs());
            for r in (row + 1)..5 {
                if m[(r, col)].abs() > best.1 {
                    best = (r, m[(r, col)].abs());
                }
            }
            if best.1 < 1e-11 * m.norm() {
                continue;
            }
            m.swap_rows(row, best.0);
            let inv = 1.0 / m[(row, col)];
            for j in 0..7 {
                m[(row, j)] *= inv;
            }
            for r in 0..5 {
                if r != row {
                    let f = m[(r, col)];
                    for j in 0..7 {
                        m[(r, j)] -= f * m[(row, j)];
                    }
                }
            }
            row += 1;
        }
        m
    }

    fn random_projective_pair(rng: &mut ChaCha8Rng) -> CameraMatrix {
        let m = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let f = FundamentalMatrix::truncate(m);
        canonical_pair(&f).1
    }

    /// A disguised metric pair with known ground truth: apply the inverse of
    /// a known upgrade homography to a metric camera 2, so the resulting
    /// projective camera has a known exact solution (f1, f2, p).
    fn disguised_pair(rng: &mut ChaCha8Rng) -> (CameraMatrix, f64, f64, Vector3<f64>) {
        let f1 = rng.random_range(700.0..1600.0);
        let f2 = rng.random_range(700.0..1600.0);
        let p = Vector3::new(
            rng.random_range(-0.4..0.4),
            rng.random_range(-0.4..0.4),
            rng.random_range(-0.4..0.4),
        );
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let r2 = RotationMatrix::from_axis_angle_deg(&axis, rng.random_range(-60.0..60.0)).unwrap();
        let t = Vector3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        let kr = CalibrationMatrix::new(f2).unwrap().matrix() * r2.matrix();
        let mut metric = Matrix3x4::zeros();
        metric.fixed_view_mut::<3, 3>(0, 0).copy_from(&kr);
        metric.set_column(3, &t);

        // H = [[K1, 0], [-p^T K1, 1]]; P_projective = P_metric H^{-1}
        let k1 = CalibrationMatrix::new(f1).unwrap().matrix();
        let mut h_inv = Matrix4::identity();
        h_inv.fixed_view_mut::<3, 3>(0, 0).copy_from(&k1.try_inverse().unwrap());
        h_inv.fixed_view_mut::<1, 3>(3, 0).copy_from(&p.transpose());
        let projective = metric * h_inv;
        (
            CameraMatrix::projective(projective).unwrap(),
            f1,
            f2,
            p,
        )
    }

    fn truth_vector(f1: f64, f2: f64, p: &Vector3<f64>) -> UnknownVector {
        let f1s = f1 * f1;
        UnknownVector::new([
            f1s,
            f2 * f2,
            f1s * p.x * p.x + f1s * p.y * p.y + p.z * p.z,
            p.z,
            f1s * p.x,
            f1s * p.y,
        ])
    }

    #[test]
    fn identity_translation_row_equates_focals() {
        let mut m = Matrix3x4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
        m[(2, 3)] = 1.0;
        let sys = build_augmented_system(&CameraMatrix::projective(m).unwrap());
        let row: Vec<f64> = (0..7).map(|j| sys.matrix()[(0, j)]).collect();
        assert_eq!(row, vec![1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn ground_truth_annihilates_all_six_rows() {
        let mut rng = trial_rng(71, 0);
        for _ in 0..25 {
            let (p2, f1, f2, p) = disguised_pair(&mut rng);
            let sys = build_augmented_system(&p2);
            let x = truth_vector(f1, f2, &p);
            let residual = sys.coefficients() * Vector::from(*x.as_array()) - sys.rhs();
            let scale = sys.matrix().norm() * Vector::from(*x.as_array()).norm();
            assert!(
                residual.norm() / scale.max(1.0) < 1e-12,
                "relative residual {}",
                residual.norm() / scale
            );
            // identical statement through the quadric projection
            let omega =
                p2.matrix() * quadric_from_unknowns(&x) * p2.matrix().transpose();
            let expected = Matrix3::from_diagonal(&Vector3::new(f2 * f2, f2 * f2, 1.0));
            assert!((omega - expected).norm() / expected.norm() < 1e-10);
        }
    }

    use nalgebra::Vector6 as Vector;

    #[test]
    fn zero_camera_gives_zero_system() {
        // all polynomial entries vanish; bypass the rank check by building the
        // row directly
        let zero = [0.0; 4];
        let row = system_row(&zero, &zero, 0.0, 0.0);
        assert_eq!(row, [0.0; 7]);
    }

    #[test]
    fn canonical_system_is_rank_deficient() {
        let mut rng = trial_rng(72, 0);
        for _ in 0..10 {
            let p2 = random_projective_pair(&mut rng);
            let sys = build_augmented_system(&p2);
            let a = sys.coefficients();
            let svd = a.svd(false, false);
            let ratio = svd.singular_values[5] / svd.singular_values[0];
            assert!(ratio < 1e-10, "sigma6/sigma1 = {ratio}");
        }
    }

    #[test]
    fn structured_reduce_matches_plain_elimination() {
        let mut rng = trial_rng(73, 0);
        for _ in 0..50 {
            let p2 = random_projective_pair(&mut rng);
            let sys = build_augmented_system(&p2);
            let red = structured_reduce(&sys).unwrap();
            let oracle = rref_oracle(&sys);
            // the oracle exposes the structural zeros of the echelon form
            for row in 0..3 {
                assert!(
                    oracle[(row, 5)].abs() < 1e-8,
                    "structural zero violated: {}",
                    oracle[(row, 5)]
                );
            }
            for i in 0..5 {
                assert_relative_eq!(red.b[i], oracle[(i, 6)], epsilon = 1e-7, max_relative = 1e-7);
            }
            assert_relative_eq!(red.c, oracle[(3, 5)], epsilon = 1e-8, max_relative = 1e-8);
            assert_relative_eq!(red.d, oracle[(4, 5)], epsilon = 1e-8, max_relative = 1e-8);
        }
    }

    #[test]
    fn non_canonical_camera_reports_structure_violation() {
        let mut rng = trial_rng(75, 0);
        let (p2, _, _, _) = disguised_pair(&mut rng);
        let sys = build_augmented_system(&p2);
        assert!(matches!(
            structured_reduce(&sys),
            Err(CalibError::StructureViolation { .. })
        ));
    }

    #[test]
    fn solve_recovers_f1_and_diagonal_diac_on_both_roots() {
        // disguise a metric camera, rebuild the canonical pair from its
        // fundamental matrix; f1 is frame-invariant and both roots must
        // reproduce a diagonal omega2* (the plane itself is checked against
        // the triangulation-and-homography oracle in the module tests)
        let mut rng = trial_rng(76, 0);
        for _ in 0..25 {
            let (p2, f1, _, _) = disguised_pair(&mut rng);
            let p1 = CameraMatrix::identity(CameraFrame::Projective);
            let f = crate::epipolar::f_from_cameras(&p1, &p2).unwrap();
            let (fb, s) = crate::selfcalib::balanced_f(&f);
            let (_, p2c) = canonical_pair(&fb);
            let sys = build_augmented_system(&p2c);
            let red = structured_reduce(&sys).unwrap();
            let (xa, xb) = solve_unknowns(&red).unwrap();
            assert_relative_eq!(s * xa.f1_squared().sqrt(), f1, max_relative = 1e-8);
            assert_relative_eq!(s * xb.f1_squared().sqrt(), f1, max_relative = 1e-8);
            assert_eq!(xa.as_array()[..3], xb.as_array()[..3]);
            for x in [&xa, &xb] {
                let omega = p2c.matrix() * quadric_from_unknowns(x) * p2c.matrix().transpose();
                assert!(omega[(0, 0)] / omega[(2, 2)] > 0.0);
                assert!(omega[(0, 1)].abs() <= 1e-8 * omega.norm());
                assert!(omega[(0, 2)].abs() <= 1e-8 * omega.norm());
                assert!(omega[(1, 2)].abs() <= 1e-8 * omega.norm());
                assert_relative_eq!(omega[(0, 0)], omega[(1, 1)], max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn double_root_when_discriminant_vanishes() {
        // c = d = 0, b5 = 0, b4 = 0 makes the quadratic u^2 / b1 = b3
        // degenerate at u = 0 when b3 = 0
        let red = ReducedSystem { b: [4.0, 9.0, 0.0, 0.0, 0.0], c: 0.0, d: 0.0 };
        let (xa, xb) = solve_unknowns(&red).unwrap();
        assert_eq!(xa, xb);
        assert_eq!(xa.as_array()[5], 0.0);
    }

    #[test]
    fn negative_focal_square_is_rejected() {
        let red = ReducedSystem { b: [-1.0, 9.0, 1.0, 0.0, 0.0], c: 0.0, d: 0.0 };
        assert!(matches!(
            solve_unknowns(&red),
            Err(CalibError::NegativeFocalSquare { .. })
        ));
        let red = ReducedSystem { b: [1.0, -9.0, 1.0, 0.0, 0.0], c: 0.0, d: 0.0 };
        assert!(matches!(
            solve_unknowns(&red),
            Err(CalibError::NegativeScaledFocal { .. })
        ));
    }

    #[test]
    fn far_negative_discriminant_is_an_error() {
        // b3 strongly negative makes q0 positive and the discriminant negative
        let red = ReducedSystem { b: [1.0, 1.0, -100.0, 0.0, 0.0], c: 0.0, d: 0.0 };
        assert!(matches!(
            solve_unknowns(&red),
            Err(CalibError::NegativeDiscriminant { .. })
        ));
    }

    #[test]
    fn unknown_vector_consistency_residual() {
        let x = UnknownVector::new([4.0, 9.0, (25.0 + 16.0) / 4.0 + 0.49, 0.7, 5.0, 4.0]);
        assert!(x.consistency_residual() < 1e-12);
        assert_relative_eq!(x.plane(), Vector3::new(1.25, 1.0, 0.7), epsilon = 1e-12);
    }

    #[test]
    fn reduced_echelon_has_the_published_zero_pattern() {
        let red = ReducedSystem { b: [1.0, 2.0, 3.0, 4.0, 5.0], c: 0.5, d: -0.25 };
        let m = red.echelon();
        for i in 0..5 {
            assert_eq!(m[(i, i)], 1.0);
        }
        for row in 0..3 {
            assert_eq!(m[(row, 5)], 0.0);
        }
        assert_eq!(m[(3, 5)], 0.5);
        assert_eq!(m[(4, 5)], -0.25);
    }

    #[test]
    fn corrupting_the_dropped_row_changes_nothing() {
        let mut rng = trial_rng(77, 0);
        let p2 = random_projective_pair(&mut rng);
        let mut sys = build_augmented_system(&p2);
        let red = structured_reduce(&sys).unwrap();
        // poison the (3,3) row; the solve path must never consume it
        for j in 0..7 {
            sys.m[(5, j)] = f64::NAN;
        }
        let red_poisoned = structured_reduce(&sys).unwrap();
        assert_eq!(red, red_poisoned);
        let (xa, xb) = solve_unknowns(&red).unwrap();
        let (ya, yb) = solve_unknowns(&red_poisoned).unwrap();
        assert_eq!(xa, ya);
        assert_eq!(xb, yb);
    }
}
