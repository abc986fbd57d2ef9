//! Monte-Carlo sweeps over motion and noise levels.
//!
//! Each trial draws one exact-model scene, adds noise, and runs the requested
//! methods on the same noisy correspondences. Results are aggregated per
//! level into `(protocol, level, method, metric, mean, std, n)` rows.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{rotation_error, translation_error, RelativePose, ShutterModel};
use crate::pipeline::{initial_stage, refine_stage, rolling_shutter_stage};
use crate::refine::RefineConfig;
use crate::robust::RansacConfig;
use crate::synth::{add_noise, generate_scene, MotionConfig, NoiseConfig, SceneConfig, SceneStructure, SynthError};

pub const LEVELS: usize = 5;
pub const CSV_HEADER: &str = "protocol,level,method,metric,mean,std,n";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    Angular,
    AngularLinear,
    GyroNoise,
    CameraNoise,
    Planar,
}

impl Protocol {
    pub const ALL: [Protocol; 5] =
        [Protocol::Angular, Protocol::AngularLinear, Protocol::GyroNoise, Protocol::CameraNoise, Protocol::Planar];

    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Angular => "angular",
            Protocol::AngularLinear => "angular-linear",
            Protocol::GyroNoise => "gyro-noise",
            Protocol::CameraNoise => "camera-noise",
            Protocol::Planar => "planar",
        }
    }

    /// Conditions of level `level` (1 to 5).
    pub fn level(&self, level: usize) -> Level {
        assert!((1..=LEVELS).contains(&level), "level {level} out of range");
        let k = level as f64;
        let noise = NoiseConfig::default();
        let (motion, noise, structure) = match self {
            Protocol::Angular => (MotionConfig::uniform(0.5 * k, 0.0), noise, SceneStructure::Frustum),
            Protocol::AngularLinear => (MotionConfig::uniform(0.5 * k, 4.0 * k), noise, SceneStructure::Frustum),
            Protocol::GyroNoise => {
                (MotionConfig::uniform(2.5, 20.0), NoiseConfig { gyro_std: 0.1 * k, ..noise }, SceneStructure::Frustum)
            }
            Protocol::CameraNoise => (MotionConfig::uniform(2.5, 20.0), NoiseConfig { pixel_std: k, ..noise }, SceneStructure::Frustum),
            Protocol::Planar => (MotionConfig::uniform(0.5 * k, 4.0 * k), noise, SceneStructure::Plane),
        };
        Level { index: level, motion, noise, structure }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "angular" => Ok(Protocol::Angular),
            "angular-linear" | "angular+linear" => Ok(Protocol::AngularLinear),
            "gyro-noise" => Ok(Protocol::GyroNoise),
            "camera-noise" => Ok(Protocol::CameraNoise),
            "planar" => Ok(Protocol::Planar),
            _ => Err(format!("unknown protocol {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub index: usize,
    pub motion: MotionConfig,
    pub noise: NoiseConfig,
    pub structure: SceneStructure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Gsrp,
    Grsrp,
    GrsrpPlus,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Gsrp, Method::Grsrp, Method::GrsrpPlus];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Gsrp => "GSRP",
            Method::Grsrp => "G-RSRP",
            Method::GrsrpPlus => "G-RSRP+",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub method: Method,
    /// Degrees.
    pub rotation_error: f64,
    /// Degrees.
    pub translation_error: f64,
    pub inlier_count: usize,
    /// Seconds spent in this method's own stage.
    pub runtime: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub scene: SceneConfig,
    pub ransac: RansacConfig,
    pub refine: RefineConfig,
}

impl ExperimentConfig {
    pub fn new(protocol: Protocol, trials: usize, seed: u64) -> Self {
        ExperimentConfig {
            protocol,
            trials,
            seed,
            methods: Method::ALL.to_vec(),
            scene: SceneConfig::default(),
            ransac: RansacConfig::default(),
            refine: RefineConfig::default(),
        }
    }
}

/// One aggregated row of the results table.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub protocol: Protocol,
    pub level: usize,
    pub method: Method,
    pub metric: &'static str,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelResults {
    pub level: Level,
    /// Per completed trial, the results of the methods that succeeded.
    pub trials: Vec<Vec<TrialResult>>,
    /// Trials whose scene could not be generated.
    pub skipped: usize,
}

impl LevelResults {
    pub fn errors(&self, method: Method) -> (Vec<f64>, Vec<f64>) {
        self.trials.iter().flatten().filter(|r| r.method == method).map(|r| (r.rotation_error, r.translation_error)).unzip()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResults {
    pub config: ExperimentConfig,
    pub levels: Vec<LevelResults>,
}

impl ExperimentResults {
    pub fn level(&self, index: usize) -> &LevelResults {
        &self.levels[index - 1]
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut rows = Vec::new();
        for lr in &self.levels {
            for &method in &self.config.methods {
                let (rot, trans) = lr.errors(method);
                for (metric, values) in [("rotation_error_deg", rot), ("translation_error_deg", trans)] {
                    let (mean, std) = mean_std(&values);
                    rows.push(SummaryRow {
                        protocol: self.config.protocol,
                        level: lr.level.index,
                        method,
                        metric,
                        mean,
                        std,
                        n: values.len(),
                    });
                }
            }
        }
        rows
    }

    pub fn to_csv(&self) -> String {
        summary_csv(&self.summary())
    }
}

/// Mean and sample standard deviation; NaN for an empty slice.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        // `{:?}` on f64 prints the shortest representation that round-trips.
        writeln!(out, "{},{},{},{},{:?},{:?},{}", r.protocol, r.level, r.method, r.metric, r.mean, r.std, r.n)
            .expect("writing to a String");
    }
    out
}

/// Generator for one trial, fixed by `(seed, level, trial)`.
pub fn trial_rng(seed: u64, level: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((level as u64) << 32) | trial as u64);
    rng
}

fn errors(truth: &RelativePose, est: &RelativePose) -> (f64, f64) {
    let rot = rotation_error(&truth.rotation, &est.rotation);
    let trans = translation_error(&truth.translation, &est.translation).unwrap_or(f64::NAN);
    (rot, trans)
}

/// Runs one trial. Methods whose estimation fails are left out of the result.
pub fn run_trial(config: &ExperimentConfig, level: &Level, trial: usize) -> Result<Vec<TrialResult>, SynthError> {
    let mut rng = trial_rng(config.seed, level.index, trial);
    let scene_cfg = SceneConfig { seed: rng.gen(), structure: level.structure, ..config.scene.clone() };
    let ransac_cfg = RansacConfig { seed: rng.gen(), ..config.ransac };
    let scene = generate_scene(&scene_cfg, &level.motion, ShutterModel::Exact)?;
    let noisy = add_noise(&scene, &level.noise, &mut rng);
    let corrs = noisy.correspondences()?;
    let truth = scene.truth.pose;
    let wants = |m: Method| config.methods.contains(&m);

    let mut out = Vec::new();
    let clock = Instant::now();
    let Ok(initial) = initial_stage(&corrs, &ransac_cfg) else {
        log::warn!("{} level {} trial {trial}: initial stage failed", config.protocol, level.index);
        return Ok(out);
    };
    let initial_s = clock.elapsed().as_secs_f64();
    if wants(Method::Gsrp) {
        let (r, t) = errors(&truth, &initial.pose);
        out.push(TrialResult { method: Method::Gsrp, rotation_error: r, translation_error: t, inlier_count: initial.score, runtime: initial_s });
    }
    if !wants(Method::Grsrp) && !wants(Method::GrsrpPlus) {
        return Ok(out);
    }

    let clock = Instant::now();
    let Ok(rs) = rolling_shutter_stage(&corrs, &initial.pose.rotation, &ransac_cfg) else {
        log::warn!("{} level {} trial {trial}: rolling-shutter stage failed", config.protocol, level.index);
        return Ok(out);
    };
    let rs_s = initial_s + clock.elapsed().as_secs_f64();
    if wants(Method::Grsrp) {
        let (r, t) = errors(&truth, &rs.pose);
        out.push(TrialResult { method: Method::Grsrp, rotation_error: r, translation_error: t, inlier_count: rs.score, runtime: rs_s });
    }
    if wants(Method::GrsrpPlus) {
        let clock = Instant::now();
        match refine_stage(&corrs, &rs, &config.refine) {
            Ok(rep) => {
                let (r, t) = errors(&truth, &rep.pose);
                out.push(TrialResult {
                    method: Method::GrsrpPlus,
                    rotation_error: r,
                    translation_error: t,
                    inlier_count: rs.score,
                    runtime: rs_s + clock.elapsed().as_secs_f64(),
                });
            }
            Err(e) => log::warn!("{} level {} trial {trial}: {e}", config.protocol, level.index),
        }
    }
    Ok(out)
}

pub fn run_level(config: &ExperimentConfig, level: usize) -> LevelResults {
    let level = config.protocol.level(level);
    let mut trials = Vec::with_capacity(config.trials);
    let mut skipped = 0;
    for trial in 0..config.trials {
        match run_trial(config, &level, trial) {
            Ok(r) => trials.push(r),
            Err(e) => {
                log::warn!("{} level {} trial {trial} skipped: {e}", config.protocol, level.index);
                skipped += 1;
            }
        }
    }
    LevelResults { level, trials, skipped }
}

pub fn run_experiment(config: &ExperimentConfig) -> ExperimentResults {
    let levels = (1..=LEVELS).map(|l| run_level(config, l)).collect();
    ExperimentResults { config: config.clone(), levels }
}
