//! End-to-end estimation: global-shutter RANSAC for an initial rotation,
//! gyro-aided rolling-shutter RANSAC, then optional refinement.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Correspondence, RelativePose, Rotation};
use crate::refine::{refine, RefineConfig, RefineError, RefineReport};
use crate::robust::{ransac, GrsrpSolver, GsrpSolver, RansacConfig, RansacError, RansacResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("global-shutter stage: {0}")]
    Initial(RansacError),
    #[error("rolling-shutter stage: {0}")]
    RollingShutter(RansacError),
    #[error("refinement: {0}")]
    Refine(#[from] RefineError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub ransac: RansacConfig,
    /// `None` skips refinement.
    pub refine: Option<RefineConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { ransac: RansacConfig::default(), refine: Some(RefineConfig::default()) }
    }
}

/// Wall-clock seconds per stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub initial_s: f64,
    pub rolling_shutter_s: f64,
    pub refine_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    pub initial: RansacResult,
    pub rolling_shutter: RansacResult,
    pub refined: Option<RefineReport>,
    pub timings: StageTimings,
}

impl PipelineOutput {
    /// Pose of the last stage that ran.
    pub fn pose(&self) -> RelativePose {
        self.refined.as_ref().map_or(self.rolling_shutter.pose, |r| r.pose)
    }

    pub fn method(&self) -> &'static str {
        if self.refined.is_some() {
            "G-RSRP+"
        } else {
            "G-RSRP"
        }
    }
}

/// Seed of the rolling-shutter RANSAC, distinct from the initial stage.
pub fn rolling_shutter_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

pub fn initial_stage(corrs: &[Correspondence], config: &RansacConfig) -> Result<RansacResult, PipelineError> {
    ransac(corrs, &Rotation::identity(), config, &GsrpSolver).map_err(PipelineError::Initial)
}

pub fn rolling_shutter_stage(
    corrs: &[Correspondence],
    r0: &Rotation,
    config: &RansacConfig,
) -> Result<RansacResult, PipelineError> {
    let config = RansacConfig { seed: rolling_shutter_seed(config.seed), ..*config };
    ransac(corrs, r0, &config, &GrsrpSolver::default()).map_err(PipelineError::RollingShutter)
}

pub fn refine_stage(
    corrs: &[Correspondence],
    result: &RansacResult,
    config: &RefineConfig,
) -> Result<RefineReport, PipelineError> {
    Ok(refine(&result.inliers(corrs), &result.pose, config)?)
}

pub fn estimate(corrs: &[Correspondence], config: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    let clock = Instant::now();
    let initial = initial_stage(corrs, &config.ransac)?;
    let initial_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let rolling_shutter = rolling_shutter_stage(corrs, &initial.pose.rotation, &config.ransac)?;
    let rolling_shutter_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let refined = config.refine.map(|rc| refine_stage(corrs, &rolling_shutter, &rc)).transpose()?;
    let refine_s = if refined.is_some() { clock.elapsed().as_secs_f64() } else { 0.0 };

    Ok(PipelineOutput { initial, rolling_shutter, refined, timings: StageTimings { initial_s, rolling_shutter_s, refine_s } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rotation_error, translation_error, ShutterModel};
    use crate::synth::{add_noise, generate_scene, MotionConfig, NoiseConfig, SceneConfig};
    use rand::SeedableRng;

    #[test]
    fn noisy_scene_end_to_end() {
        let scene = generate_scene(&SceneConfig { seed: 5, ..Default::default() }, &MotionConfig::uniform(2.0, 8.0), ShutterModel::Exact)
            .unwrap();
        let noisy = add_noise(&scene, &NoiseConfig::default(), &mut rand_chacha::ChaCha8Rng::seed_from_u64(5));
        let corrs = noisy.correspondences().unwrap();
        let out = estimate(&corrs, &PipelineConfig::default()).unwrap();
        assert_eq!(out.method(), "G-RSRP+");
        let pose = out.pose();
        assert!(rotation_error(&scene.truth.pose.rotation, &pose.rotation) < 2.0);
        assert!(translation_error(&scene.truth.pose.translation, &pose.translation).unwrap() < 10.0);
        let rep = out.refined.unwrap();
        assert!(rep.final_cost <= rep.initial_cost);

        let plain = estimate(&corrs, &PipelineConfig { refine: None, ..Default::default() }).unwrap();
        assert_eq!(plain.method(), "G-RSRP");
        assert_eq!(plain.pose(), out.rolling_shutter.pose);
        assert_eq!(plain.timings.refine_s, 0.0);
    }
}
