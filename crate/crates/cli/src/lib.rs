//! Command implementations behind the `rsrp` binary.

pub mod dataset;

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rsrp_core::experiment::{run_experiment, ExperimentConfig, Protocol, SummaryRow};
use rsrp_core::geometry::{rotation_error, translation_error, RelativePose, ShutterModel};
use rsrp_core::pipeline::{estimate, PipelineConfig, PipelineError, PipelineOutput};
use rsrp_core::refine::RefineConfig;
use rsrp_core::robust::RansacConfig;
use rsrp_core::synth::{add_noise, generate_scene, SceneConfig, SynthError};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

pub use dataset::{DatasetError, PairDataset};

/// Exit code for usage and IO problems.
pub const EXIT_IO: i32 = 2;
/// Exit code for estimation failures.
pub const EXIT_ESTIMATION: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Estimation(#[from] PipelineError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Dataset(_) | CliError::Write { .. } | CliError::Usage(_) => EXIT_IO,
            CliError::Estimation(_) | CliError::Synth(_) => EXIT_ESTIMATION,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Dataset(DatasetError::Io { .. }) => "io",
            CliError::Dataset(DatasetError::Parse { .. }) => "parse",
            CliError::Dataset(DatasetError::Validation(_)) => "validation",
            CliError::Write { .. } => "io",
            CliError::Usage(_) => "usage",
            CliError::Estimation(_) => "estimation",
            CliError::Synth(_) => "synthesis",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": { "kind": self.kind(), "message": self.to_string(), "exit_code": self.exit_code() } })
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Write { path: path.display().to_string(), message: e.to_string() })
}

#[derive(Clone, Copy, Debug)]
pub struct EstimateOptions {
    pub seed: u64,
    pub threshold: f64,
    pub iterations: usize,
    pub refine: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        let r = RansacConfig::default();
        EstimateOptions { seed: 0, threshold: r.inlier_threshold, iterations: r.max_iterations, refine: true }
    }
}

impl EstimateOptions {
    pub fn ransac(&self) -> RansacConfig {
        RansacConfig { inlier_threshold: self.threshold, max_iterations: self.iterations, seed: self.seed, ..Default::default() }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig { ransac: self.ransac(), refine: self.refine.then(RefineConfig::default) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RotationJson {
    pub quaternion_wxyz: [f64; 4],
    pub matrix: [[f64; 3]; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorsJson {
    pub rotation_deg: f64,
    pub translation_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateJson {
    pub method: &'static str,
    pub rotation: RotationJson,
    pub translation: [f64; 3],
    pub inliers: usize,
    pub correspondences: usize,
    pub timings_s: rsrp_core::pipeline::StageTimings,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground_truth_error: Option<ErrorsJson>,
}

pub fn pose_errors(truth: &RelativePose, est: &RelativePose) -> ErrorsJson {
    ErrorsJson {
        rotation_deg: rotation_error(&truth.rotation, &est.rotation),
        translation_deg: translation_error(&truth.translation, &est.translation).unwrap_or(f64::NAN),
    }
}

pub fn estimate_dataset(ds: &PairDataset, opts: &EstimateOptions) -> Result<(PipelineOutput, EstimateJson), CliError> {
    let corrs = ds.correspondences()?;
    let out = estimate(&corrs, &opts.pipeline())?;
    let pose = out.pose();
    let q = pose.rotation.to_quaternion();
    let m = pose.rotation.matrix();
    let report = EstimateJson {
        method: out.method(),
        rotation: RotationJson {
            quaternion_wxyz: [q.w, q.i, q.j, q.k],
            matrix: [0, 1, 2].map(|r| [0, 1, 2].map(|c| m[(r, c)])),
        },
        translation: pose.translation.into(),
        inliers: out.rolling_shutter.score,
        correspondences: corrs.len(),
        timings_s: out.timings,
        ground_truth_error: ds.ground_truth().map(|gt| pose_errors(&gt, &pose)),
    };
    Ok((out, report))
}

pub fn cmd_estimate(path: &Path, opts: &EstimateOptions) -> Result<EstimateJson, CliError> {
    let ds = PairDataset::load(path)?;
    Ok(estimate_dataset(&ds, opts)?.1)
}

#[derive(Clone, Debug)]
pub struct BenchOptions {
    pub protocols: Vec<Protocol>,
    pub trials: usize,
    pub seed: u64,
    pub threshold: f64,
    pub iterations: usize,
    pub out: PathBuf,
}

/// CSV file name of a protocol's sweep.
pub fn csv_name(protocol: Protocol) -> String {
    format!("{}.csv", protocol.name())
}

/// Runs the sweeps and writes one CSV per protocol. Returns the summary rows.
pub fn cmd_bench(opts: &BenchOptions) -> Result<Vec<SummaryRow>, CliError> {
    if opts.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    fs::create_dir_all(&opts.out)
        .map_err(|e| CliError::Write { path: opts.out.display().to_string(), message: e.to_string() })?;
    let mut all = Vec::new();
    for &protocol in &opts.protocols {
        let mut cfg = ExperimentConfig::new(protocol, opts.trials, opts.seed);
        cfg.ransac.inlier_threshold = opts.threshold;
        cfg.ransac.max_iterations = opts.iterations;
        let results = run_experiment(&cfg);
        let skipped: usize = results.levels.iter().map(|l| l.skipped).sum();
        if skipped > 0 {
            log::warn!("{protocol}: {skipped} trials skipped");
        }
        write_file(&opts.out.join(csv_name(protocol)), &results.to_csv())?;
        all.extend(results.summary());
    }
    Ok(all)
}

/// Fixed-width table of the summary rows.
pub fn format_table(rows: &[SummaryRow]) -> String {
    let mut out = format!("{:<15} {:>5} {:<8} {:<22} {:>10} {:>10} {:>5}\n", "protocol", "level", "method", "metric", "mean", "std", "n");
    for r in rows {
        out += &format!(
            "{:<15} {:>5} {:<8} {:<22} {:>10.4} {:>10.4} {:>5}\n",
            r.protocol.name(),
            r.level,
            r.method.name(),
            r.metric,
            r.mean,
            r.std,
            r.n
        );
    }
    out
}

#[derive(Clone, Copy, Debug)]
pub struct ExportOptions {
    pub protocol: Protocol,
    pub level: usize,
    pub seed: u64,
    pub noisy: bool,
}

/// Synthetic pair of the given protocol level. Pixels pushed off the sensor
/// by noise are dropped.
pub fn synthetic_dataset(opts: &ExportOptions) -> Result<PairDataset, CliError> {
    if !(1..=rsrp_core::experiment::LEVELS).contains(&opts.level) {
        return Err(CliError::Usage(format!("--level must be 1 to 5, got {}", opts.level)));
    }
    let level = opts.protocol.level(opts.level);
    let scene_cfg = SceneConfig { seed: opts.seed, structure: level.structure, ..Default::default() };
    let mut scene = generate_scene(&scene_cfg, &level.motion, ShutterModel::Exact)?;
    if opts.noisy {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        scene = add_noise(&scene, &level.noise, &mut rng);
    }
    let intr = scene.intrinsics;
    scene.pixels.retain(|p| intr.contains(p.i) && intr.contains(p.j));
    let ds = PairDataset::from_scene(&scene);
    ds.validate()?;
    Ok(ds)
}

pub fn cmd_export(opts: &ExportOptions, out: &Path) -> Result<PairDataset, CliError> {
    let ds = synthetic_dataset(opts)?;
    write_file(out, &(ds.to_json() + "\n"))?;
    Ok(ds)
}
