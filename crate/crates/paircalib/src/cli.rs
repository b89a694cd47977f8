//! Command-line surface: pair calibration, match verification, estimate
//! averaging, and the synthetic benchmark.
//!
//! Exit codes: 0 success, 2 parse error, 3 precondition violation,
//! 4 numerical/degenerate failure, 5 I/O error.

use crate::averaging::{register_rotations, select_focal, AveragingError, FocalMethod};
use crate::epipolar::EpipolarError;
use crate::geometry::GeometryError;
use crate::io::{
    read_focal_pool, read_match_file, read_rotation_graph, write_match_file, CalibrationReport,
    IoError, MatchData,
};
use crate::selfcalib::{
    calibrate_from_matches, verify_solution_geometry, CalibError, CalibrateOptions, RansacOptions,
};
use crate::synth::{run_pair_benchmark, BenchmarkConfig};
use crate::verify::{recursive_verify, verification_metrics, VerificationConfig, VerifyError};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "paircalib",
    about = "Camera-pair self-calibration, metric reconstruction, match verification, and estimate averaging"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Self-calibrate a camera pair from a match file and report the metric
    /// reconstruction candidates.
    CalibratePair(CalibratePairArgs),
    /// Filter a match file by recursive order-consistency verification.
    VerifyMatches(VerifyMatchesArgs),
    /// Average pairwise estimates: rotation registration or focal selection.
    Average(AverageArgs),
    /// Run the synthetic noise-grid benchmark and write a CSV table.
    #[command(alias = "eval")]
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct CalibratePairArgs {
    /// Match file path.
    pub matches: PathBuf,
    /// RANSAC iterations; 0 runs a plain 8-point fit on all rows.
    #[arg(long, default_value_t = 300)]
    pub ransac_iters: usize,
    /// Sampson inlier threshold, squared pixels.
    #[arg(long, default_value_t = 4.0)]
    pub sampson_thresh: f64,
    /// RNG seed; falls back to the SEED environment variable, then 1.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the full JSON report here.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyMatchesArgs {
    /// Match file path.
    pub matches: PathBuf,
    /// Threshold coefficient of the relaxed order test.
    #[arg(long, default_value_t = 0.02)]
    pub alpha: f64,
    /// Recursion cutoff in pixels.
    #[arg(long, default_value_t = 200.0)]
    pub min_region: f64,
    /// Output path for the filtered match file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AverageArgs {
    /// Rotation graph file (edge lines); mutually exclusive with --focal.
    #[arg(long, conflicts_with = "focal")]
    pub rotations: Option<PathBuf>,
    /// Focal pool file (pair lines).
    #[arg(long)]
    pub focal: Option<PathBuf>,
    /// Focal selection method.
    #[arg(long, default_value = "jcc", value_parser = ["median", "cc", "jcc"])]
    pub method: String,
    /// Relative range of the confidence counts.
    #[arg(long, default_value_t = 0.10)]
    pub beta: f64,
    /// Weiszfeld sweeps for rotation registration.
    #[arg(long, default_value_t = 20)]
    pub sweeps: usize,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Comma-separated noise levels in pixels.
    #[arg(long, default_value = "0,0.25,0.5,1,2", value_delimiter = ',')]
    pub sigma_grid: Vec<f64>,
    /// Trials per noise level.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// RNG seed; falls back to the SEED environment variable, then 1.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Points per synthetic pair.
    #[arg(long, default_value_t = 200)]
    pub n_points: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Calib(#[from] CalibError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Averaging(#[from] AveragingError),
    #[error("{0}")]
    Precondition(String),
}

impl CliError {
    /// Exit-code taxonomy: 2 parse, 3 precondition, 4 numerical, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(IoError::Parse { .. }) => 2,
            CliError::Io(IoError::Io(_)) => 5,
            CliError::Precondition(_) => 3,
            CliError::Verify(_) => 3,
            CliError::Averaging(AveragingError::EmptyInput | AveragingError::EmptyPool(_)) => 3,
            CliError::Averaging(AveragingError::DisconnectedGraph) => 4,
            CliError::Calib(CalibError::Epipolar(EpipolarError::TooFewCorrespondences {
                ..
            })) => 3,
            CliError::Calib(CalibError::Epipolar(EpipolarError::InvalidIterations)) => 3,
            CliError::Calib(CalibError::Geometry(GeometryError::InvalidFocal(_))) => 3,
            CliError::Calib(_) => 4,
        }
    }
}

fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| std::env::var("SEED").ok().and_then(|s| s.parse().ok()))
        .unwrap_or(1)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::CalibratePair(args) => cmd_calibrate_pair(args),
        Command::VerifyMatches(args) => cmd_verify_matches(args),
        Command::Average(args) => cmd_average(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

fn cmd_calibrate_pair(args: CalibratePairArgs) -> Result<(), CliError> {
    let data = read_match_file(&args.matches)?;
    if data.corrs.len() < 8 {
        return Err(CliError::Precondition(format!(
            "need at least 8 correspondences, got {}",
            data.corrs.len()
        )));
    }
    let opts = CalibrateOptions {
        ransac: (args.ransac_iters > 0).then(|| RansacOptions {
            iterations: args.ransac_iters,
            threshold: args.sampson_thresh,
            seed: resolve_seed(args.seed),
        }),
        ..CalibrateOptions::default()
    };
    let solution = calibrate_from_matches(&data.corrs, &opts)?;
    let report = verify_solution_geometry(&solution)?;

    println!("pair {} {}", data.id1, data.id2);
    println!("f1 = {:.6} px", solution.f1);
    println!("f2 = {:.6} px", solution.f2);
    println!("kappa_epsilon = {:.6e}", solution.kappa_epsilon);
    println!(
        "chosen candidate: {:?} (front-of-both votes: {} / {}, translation flipped: {})",
        solution.chosen,
        solution.votes.both[0].max(solution.votes.both[1]),
        solution.votes.valid,
        solution.translation_flipped
    );
    println!(
        "cross-pass consistency: {} (f1 rel diff {:.3e}, f2 rel diff {:.3e})",
        if solution.consistency.ok { "ok" } else { "FLAGGED" },
        solution.consistency.f1_rel_diff,
        solution.consistency.f2_rel_diff
    );
    for check in &report.checks {
        println!(
            "check {:<20} {:>12.3e}  {}",
            check.name,
            check.value,
            if check.pass { "pass" } else { "FAIL" }
        );
    }

    if let Some(path) = args.json_out {
        let json = serde_json::to_string_pretty(&CalibrationReport::new(&solution, &report))
            .expect("report serializes");
        std::fs::write(&path, json).map_err(IoError::from)?;
    }
    Ok(())
}

fn cmd_verify_matches(args: VerifyMatchesArgs) -> Result<(), CliError> {
    let data = read_match_file(&args.matches)?;
    let cfg = VerificationConfig::new(args.alpha, args.min_region)?;
    let subset = recursive_verify(&data.corrs, &cfg);

    for stage in &subset.stages {
        println!(
            "node depth={} region=[{:.1}, {:.1}] input={} after_x={} after_y={}{}",
            stage.depth,
            stage.region.0,
            stage.region.1,
            stage.input,
            stage.after_x,
            stage.after_y,
            if stage.leaf { " leaf" } else { "" }
        );
    }
    println!("kept {} of {} correspondences", subset.indices.len(), data.corrs.len());

    if let Some(labels) = data.corrs.labels() {
        let (precision, recall) = verification_metrics(&subset.indices, labels)?;
        match precision {
            Some(p) => println!("precision = {p:.4}"),
            None => println!("precision = undefined (empty prediction)"),
        }
        println!("recall = {recall:.4}");
    }

    let filtered = MatchData {
        id1: data.id1.clone(),
        id2: data.id2.clone(),
        corrs: data.corrs.subset(&subset.indices),
    };
    write_match_file(&args.out, &filtered)?;
    Ok(())
}

fn cmd_average(args: AverageArgs) -> Result<(), CliError> {
    match (&args.rotations, &args.focal) {
        (Some(path), None) => {
            let graph = read_rotation_graph(path)?;
            let rotations = register_rotations(&graph, args.sweeps)?;
            let json: serde_json::Value = serde_json::Value::Object(
                rotations
                    .iter()
                    .map(|(node, r)| {
                        let m = r.matrix();
                        let rows: Vec<serde_json::Value> = (0..3)
                            .map(|i| serde_json::json!([m[(i, 0)], m[(i, 1)], m[(i, 2)]]))
                            .collect();
                        (node.to_string(), serde_json::Value::Array(rows))
                    })
                    .collect(),
            );
            emit_json(&args.json_out, &json)?;
        }
        (None, Some(path)) => {
            let pool = read_focal_pool(path)?;
            let method = match args.method.as_str() {
                "median" => FocalMethod::Median,
                "cc" => FocalMethod::ConfidenceCount,
                _ => FocalMethod::JointConfidenceCount,
            };
            let mut results = serde_json::Map::new();
            for image in pool.images().collect::<Vec<_>>() {
                let f = select_focal(&pool, image, method, args.beta)?;
                results.insert(image.to_string(), serde_json::json!(f));
            }
            emit_json(&args.json_out, &serde_json::Value::Object(results))?;
        }
        _ => {
            return Err(CliError::Precondition(
                "exactly one of --rotations or --focal is required".into(),
            ));
        }
    }
    Ok(())
}

fn emit_json(path: &Option<PathBuf>, value: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("json serializes");
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(IoError::from(e)))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let cfg = BenchmarkConfig {
        sigmas: args.sigma_grid.clone(),
        trials: args.trials,
        seed: resolve_seed(args.seed),
        n_points: args.n_points,
    };
    let table = run_pair_benchmark(&cfg);
    std::fs::write(&args.out, table.to_csv()).map_err(IoError::from)?;
    println!("wrote {} rows to {}", table.rows.len(), args.out.display());
    Ok(())
}
