//! Text file formats: match files, camera files, rotation graphs, focal
//! pools, and the JSON report types. Floats are written with Rust's shortest
//! round-trip formatting, so write-then-read reproduces values bit-exactly.

use crate::averaging::{FocalEstimatePool, RotationGraph};
use crate::epipolar::{Correspondence, CorrespondenceSet};
use crate::geometry::{CameraFrame, CameraMatrix, RotationMatrix};
use crate::selfcalib::{CandidateReconstruction, ChosenCandidate, GeometryReport, PairSolution};
use nalgebra::{Matrix3, Matrix3x4, Vector2, Vector3};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_err(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse { line, message: message.into() }
}

fn parse_f64(line: usize, tok: &str) -> Result<f64, IoError> {
    let v: f64 = tok.parse().map_err(|_| parse_err(line, format!("bad number '{tok}'")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite value '{tok}'")));
    }
    Ok(v)
}

fn parse_usize(line: usize, tok: &str) -> Result<usize, IoError> {
    tok.parse().map_err(|_| parse_err(line, format!("bad integer '{tok}'")))
}

/// A parsed match file: pair ids and the correspondences.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchData {
    pub id1: String,
    pub id2: String,
    pub corrs: CorrespondenceSet,
}

/// Match file format:
///
/// ```text
/// # pair <id1> <id2>
/// # size <w1> <h1> <w2> <h2>
/// x1 y1 x2 y2 [label]
/// ```
///
/// Rows have 4 or 5 columns, consistently; the optional fifth column is a
/// 0/1 ground-truth inlier label. Coordinates are principal-point-centered
/// pixels.
pub fn read_match_file(path: &Path) -> Result<MatchData, IoError> {
    let content = std::fs::read_to_string(path)?;
    let mut id1 = String::from("0");
    let mut id2 = String::from("1");
    let mut sizes: Option<((f64, f64), (f64, f64))> = None;
    let mut pairs = Vec::new();
    let mut labels = Vec::new();
    let mut columns: Option<usize> = None;

    for (ln, raw) in content.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let toks: Vec<&str> = rest.split_whitespace().collect();
            match toks.first().copied() {
                Some("pair") if toks.len() == 3 => {
                    id1 = toks[1].to_string();
                    id2 = toks[2].to_string();
                }
                Some("size") if toks.len() == 5 => {
                    sizes = Some((
                        (parse_f64(line_no, toks[1])?, parse_f64(line_no, toks[2])?),
                        (parse_f64(line_no, toks[3])?, parse_f64(line_no, toks[4])?),
                    ));
                }
                _ => {} // free-form comment
            }
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 4 && toks.len() != 5 {
            return Err(parse_err(line_no, format!("expected 4 or 5 columns, got {}", toks.len())));
        }
        match columns {
            None => columns = Some(toks.len()),
            Some(c) if c != toks.len() => {
                return Err(parse_err(line_no, "inconsistent column count"));
            }
            _ => {}
        }
        pairs.push(Correspondence {
            x1: Vector2::new(parse_f64(line_no, toks[0])?, parse_f64(line_no, toks[1])?),
            x2: Vector2::new(parse_f64(line_no, toks[2])?, parse_f64(line_no, toks[3])?),
        });
        if toks.len() == 5 {
            labels.push(match toks[4] {
                "0" => false,
                "1" => true,
                other => return Err(parse_err(line_no, format!("label must be 0 or 1, got '{other}'"))),
            });
        }
    }

    let mut corrs = CorrespondenceSet::new(pairs)
        .map_err(|e| parse_err(0, e.to_string()))?;
    if !labels.is_empty() {
        corrs = corrs.with_labels(labels).map_err(|e| parse_err(0, e.to_string()))?;
    }
    if let Some((s1, s2)) = sizes {
        corrs = corrs.with_image_sizes(s1, s2);
    }
    Ok(MatchData { id1, id2, corrs })
}

pub fn write_match_file(path: &Path, data: &MatchData) -> Result<(), IoError> {
    std::fs::write(path, format_match_file(data))?;
    Ok(())
}

pub fn format_match_file(data: &MatchData) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# pair {} {}", data.id1, data.id2);
    if let (Some(s1), Some(s2)) = (data.corrs.image1_size(), data.corrs.image2_size()) {
        let _ = writeln!(out, "# size {} {} {} {}", s1.0, s1.1, s2.0, s2.1);
    }
    let labels = data.corrs.labels();
    for (i, c) in data.corrs.pairs().iter().enumerate() {
        match labels {
            Some(l) => {
                let _ = writeln!(
                    out,
                    "{} {} {} {} {}",
                    c.x1.x, c.x1.y, c.x2.x, c.x2.y,
                    if l[i] { 1 } else { 0 }
                );
            }
            None => {
                let _ = writeln!(out, "{} {} {} {}", c.x1.x, c.x1.y, c.x2.x, c.x2.y);
            }
        }
    }
    out
}

/// Camera file format, one block per camera:
///
/// ```text
/// camera <id>
/// P <12 values, row-major 3x4>
/// ```
/// or
/// ```text
/// camera <id>
/// f <focal>
/// R <9 values, row-major>
/// C <3 values>
/// ```
pub fn read_camera_file(path: &Path) -> Result<Vec<(String, CameraMatrix)>, IoError> {
    let content = std::fs::read_to_string(path)?;
    let mut cameras = Vec::new();
    let mut current: Option<(String, Option<f64>, Option<Matrix3<f64>>, Option<Vector3<f64>>, Option<Matrix3x4<f64>>)> = None;

    let flush = |cur: Option<(String, Option<f64>, Option<Matrix3<f64>>, Option<Vector3<f64>>, Option<Matrix3x4<f64>>)>,
                 cameras: &mut Vec<(String, CameraMatrix)>,
                 line_no: usize|
     -> Result<(), IoError> {
        let Some((id, f, r, c, p)) = cur else { return Ok(()) };
        let matrix = match (p, f, r, c) {
            (Some(p), _, _, _) => p,
            (None, Some(f), Some(r), Some(c)) => {
                let k = Matrix3::from_diagonal(&Vector3::new(f, f, 1.0));
                let kr = k * r;
                let mut m = Matrix3x4::zeros();
                m.fixed_view_mut::<3, 3>(0, 0).copy_from(&kr);
                m.set_column(3, &(-kr * c));
                m
            }
            _ => return Err(parse_err(line_no, format!("camera '{id}' is incomplete"))),
        };
        let cam = CameraMatrix::new(matrix, CameraFrame::Metric)
            .map_err(|e| parse_err(line_no, format!("camera '{id}': {e}")))?;
        cameras.push((id, cam));
        Ok(())
    };

    for (ln, raw) in content.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[0] {
            "camera" => {
                if toks.len() != 2 {
                    return Err(parse_err(line_no, "camera needs an id"));
                }
                flush(current.take(), &mut cameras, line_no)?;
                current = Some((toks[1].to_string(), None, None, None, None));
            }
            key @ ("P" | "f" | "R" | "C") => {
                let Some(cur) = current.as_mut() else {
                    return Err(parse_err(line_no, "field before any 'camera' line"));
                };
                let vals: Vec<f64> = toks[1..]
                    .iter()
                    .map(|t| parse_f64(line_no, t))
                    .collect::<Result<_, _>>()?;
                match (key, vals.len()) {
                    ("P", 12) => {
                        cur.4 = Some(Matrix3x4::from_fn(|i, j| vals[i * 4 + j]));
                    }
                    ("f", 1) => cur.1 = Some(vals[0]),
                    ("R", 9) => cur.2 = Some(Matrix3::from_fn(|i, j| vals[i * 3 + j])),
                    ("C", 3) => cur.3 = Some(Vector3::new(vals[0], vals[1], vals[2])),
                    (k, n) => {
                        return Err(parse_err(line_no, format!("field {k} with {n} values")));
                    }
                }
            }
            other => return Err(parse_err(line_no, format!("unknown field '{other}'"))),
        }
    }
    flush(current, &mut cameras, 0)?;
    Ok(cameras)
}

pub fn write_camera_file(path: &Path, cameras: &[(String, CameraMatrix)]) -> Result<(), IoError> {
    let mut out = String::new();
    for (id, cam) in cameras {
        let _ = writeln!(out, "camera {id}");
        let m = cam.matrix();
        let vals: Vec<String> = (0..3)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)].to_string())
            .collect();
        let _ = writeln!(out, "P {}", vals.join(" "));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Rotation graph file: one edge per line,
/// `edge <i> <j> <r11> ... <r33>` (row-major R_ij with R_j = R_ij R_i).
pub fn read_rotation_graph(path: &Path) -> Result<RotationGraph, IoError> {
    let content = std::fs::read_to_string(path)?;
    let mut graph = RotationGraph::new();
    for (ln, raw) in content.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks[0] != "edge" || toks.len() != 12 {
            return Err(parse_err(line_no, "expected: edge i j r11 .. r33"));
        }
        let i = parse_usize(line_no, toks[1])?;
        let j = parse_usize(line_no, toks[2])?;
        let vals: Vec<f64> =
            toks[3..].iter().map(|t| parse_f64(line_no, t)).collect::<Result<_, _>>()?;
        let m = Matrix3::from_fn(|r, c| vals[r * 3 + c]);
        let rot = RotationMatrix::new(m)
            .or_else(|_| RotationMatrix::project(&m))
            .map_err(|e| parse_err(line_no, e.to_string()))?;
        graph.add_edge(i, j, rot);
    }
    Ok(graph)
}

pub fn write_rotation_graph(path: &Path, graph: &RotationGraph) -> Result<(), IoError> {
    let mut out = String::new();
    for (i, j, r) in graph.edges() {
        let m = r.matrix();
        let vals: Vec<String> = (0..3)
            .flat_map(|a| (0..3).map(move |b| (a, b)))
            .map(|(a, b)| m[(a, b)].to_string())
            .collect();
        let _ = writeln!(out, "edge {i} {j} {}", vals.join(" "));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Focal pool file: one paired estimate per line,
/// `pair <img_i> <f_i> <img_j> <f_j>`.
pub fn read_focal_pool(path: &Path) -> Result<FocalEstimatePool, IoError> {
    let content = std::fs::read_to_string(path)?;
    let mut pool = FocalEstimatePool::new();
    for (ln, raw) in content.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks[0] != "pair" || toks.len() != 5 {
            return Err(parse_err(line_no, "expected: pair img_i f_i img_j f_j"));
        }
        pool.add_pair_estimate(
            parse_usize(line_no, toks[1])?,
            parse_f64(line_no, toks[2])?,
            parse_usize(line_no, toks[3])?,
            parse_f64(line_no, toks[4])?,
        );
    }
    Ok(pool)
}

/// JSON-facing mirror of a candidate reconstruction.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CandidateReport {
    pub rotation: [[f64; 3]; 3],
    pub translation_dir: [f64; 3],
    pub plane_at_infinity: [f64; 3],
    pub f2_block: f64,
    pub mu: f64,
    pub front_votes_both: usize,
    pub front_votes_cam2: usize,
    pub front_votes_cam1: usize,
    pub camera2: [[f64; 4]; 3],
}

impl CandidateReport {
    fn from_candidate(c: &CandidateReconstruction) -> Self {
        let m = c.camera2.matrix();
        Self {
            rotation: std::array::from_fn(|i| std::array::from_fn(|j| c.rotation[(i, j)])),
            translation_dir: [c.translation_dir.x, c.translation_dir.y, c.translation_dir.z],
            plane_at_infinity: [c.plane.x, c.plane.y, c.plane.z],
            f2_block: c.f2_block,
            mu: c.mu,
            front_votes_both: c.front_votes_both,
            front_votes_cam2: c.front_votes_cam2,
            front_votes_cam1: c.front_votes_cam1,
            camera2: std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)])),
        }
    }
}

/// JSON report of a pair calibration.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CalibrationReport {
    pub f1: f64,
    pub f2: f64,
    pub kappa_epsilon: f64,
    pub chosen: String,
    pub translation_flipped: bool,
    pub consistency_ok: bool,
    pub f1_rel_diff: f64,
    pub f2_rel_diff: f64,
    pub votes_both: [usize; 2],
    pub votes_cam2: [usize; 2],
    pub votes_valid: usize,
    pub candidates: Vec<CandidateReport>,
    pub theorem_checks: GeometryReport,
}

impl CalibrationReport {
    pub fn new(sol: &PairSolution, report: &GeometryReport) -> Self {
        Self {
            f1: sol.f1,
            f2: sol.f2,
            kappa_epsilon: sol.kappa_epsilon,
            chosen: match sol.chosen {
                ChosenCandidate::First => "first".into(),
                ChosenCandidate::Second => "second".into(),
                ChosenCandidate::Undecided => "undecided".into(),
            },
            translation_flipped: sol.translation_flipped,
            consistency_ok: sol.consistency.ok,
            f1_rel_diff: sol.consistency.f1_rel_diff,
            f2_rel_diff: sol.consistency.f2_rel_diff,
            votes_both: sol.votes.both,
            votes_cam2: sol.votes.cam2,
            votes_valid: sol.votes.valid,
            candidates: sol.candidates.iter().map(CandidateReport::from_candidate).collect(),
            theorem_checks: report.clone(),
        }
    }
}
