//! RANSAC over a minimal solver.
//!
//! Every iteration draws five distinct correspondences, asks the solver for
//! all its pose hypotheses and scores each one by the number of
//! correspondences whose absolute algebraic epipolar residual is at most the
//! threshold. Whatever the solver, the residual is the linearized
//! rolling-shutter one. The iteration budget is fixed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    epipolar_residual, rs_rotation, triangulate_depths, Correspondence, RelativePose, Rotation,
    ShutterModel,
};
use crate::gs::{gs_relative_poses, GsMinimalProblem};
use crate::minimal::{default_template, solve, EliminationTemplate, MinimalProblem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RansacError {
    #[error("need at least {needed} correspondences, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("no iteration produced a valid hypothesis")]
    NoValidHypothesis,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    /// Largest absolute algebraic residual of an inlier.
    pub inlier_threshold: f64,
    pub max_iterations: usize,
    pub seed: u64,
    pub min_sample: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig { inlier_threshold: 0.01, max_iterations: 200, seed: 0, min_sample: 5 }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<(), RansacError> {
        if !(self.inlier_threshold.is_finite() && self.inlier_threshold > 0.0) {
            return Err(RansacError::InvalidConfig(format!("threshold must be positive, got {}", self.inlier_threshold)));
        }
        if self.max_iterations == 0 {
            return Err(RansacError::InvalidConfig("at least one iteration is required".into()));
        }
        if self.min_sample != 5 {
            return Err(RansacError::InvalidConfig(format!("minimal sample is 5, got {}", self.min_sample)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RansacResult {
    pub pose: RelativePose,
    pub inlier_mask: Vec<bool>,
    pub score: usize,
    pub iterations_run: usize,
    /// Sum of squared residuals over the inliers.
    pub residual_sum: f64,
}

impl RansacResult {
    pub fn inliers<'a>(&self, correspondences: &'a [Correspondence]) -> Vec<Correspondence> {
        correspondences.iter().zip(&self.inlier_mask).filter(|(_, m)| **m).map(|(c, _)| *c).collect::<Vec<_>>()
    }
}

/// Progress report after each iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationTrace {
    pub iteration: usize,
    pub hypotheses: usize,
    pub best_score: usize,
}

pub trait MinimalSolver {
    fn name(&self) -> &'static str;
    /// All pose hypotheses from a minimal sample.
    fn hypotheses(&self, sample: &[Correspondence], r0: &Rotation) -> Vec<RelativePose>;
    /// Adjusts the winning pose using its inliers.
    fn finalize(&self, pose: RelativePose, _inliers: &[Correspondence]) -> RelativePose {
        pose
    }
}

/// Global-shutter five-point solver; its hypotheses ignore rows and gyro
/// rates.
#[derive(Clone, Copy, Debug, Default)]
pub struct GsrpSolver;

impl MinimalSolver for GsrpSolver {
    fn name(&self) -> &'static str {
        "GSRP"
    }

    fn hypotheses(&self, sample: &[Correspondence], _r0: &Rotation) -> Vec<RelativePose> {
        let pairs: Vec<_> = sample.iter().map(|c| (c.obs_i.point, c.obs_j.point)).collect();
        GsMinimalProblem::new(&pairs).and_then(|p| gs_relative_poses(&p)).unwrap_or_default()
    }

}

/// Gyro-aided rolling-shutter minimal solver.
#[derive(Clone, Copy, Debug)]
pub struct GrsrpSolver<'a> {
    pub template: &'a EliminationTemplate,
}

impl Default for GrsrpSolver<'static> {
    fn default() -> Self {
        GrsrpSolver { template: default_template() }
    }
}

impl MinimalSolver for GrsrpSolver<'_> {
    fn name(&self) -> &'static str {
        "G-RSRP"
    }

    /// Real solutions come in `(a, +-t)` pairs that score identically; only
    /// the member with more points in front of both cameras is kept.
    fn hypotheses(&self, sample: &[Correspondence], r0: &Rotation) -> Vec<RelativePose> {
        let Some(problem) = MinimalProblem::new(sample, *r0) else {
            return Vec::new();
        };
        let Ok(solutions) = solve(&problem, self.template) else {
            return Vec::new();
        };
        let mut out: Vec<RelativePose> = Vec::new();
        for pose in solutions.poses() {
            let duplicate = out.iter().any(|p| {
                (p.rotation.matrix() - pose.rotation.matrix()).norm() < 1e-9 && (p.translation + pose.translation).norm() < 1e-9
            });
            if !duplicate {
                out.push(resolve_translation_sign(pose, sample));
            }
        }
        out
    }

    fn finalize(&self, pose: RelativePose, inliers: &[Correspondence]) -> RelativePose {
        resolve_translation_sign(&pose, inliers)
    }
}

/// Points in front of both cameras under the row-dependent rotation.
pub fn cheirality_count(pose: &RelativePose, correspondences: &[Correspondence]) -> usize {
    correspondences
        .iter()
        .filter(|c| {
            let r = rs_rotation(&pose.rotation, c, ShutterModel::Linearized);
            matches!(
                triangulate_depths(&r, &pose.translation, &c.obs_i.point.lift(), &c.obs_j.point.lift()),
                Some((zi, zj)) if zi > 0.0 && zj > 0.0
            )
        })
        .count()
}

/// Chooses between `t` and `-t` by cheirality; ties keep `t`.
pub fn resolve_translation_sign(pose: &RelativePose, correspondences: &[Correspondence]) -> RelativePose {
    let flipped = pose.with_flipped_translation();
    if cheirality_count(&flipped, correspondences) > cheirality_count(pose, correspondences) {
        flipped
    } else {
        *pose
    }
}

/// Inlier mask and summed squared inlier residual of a pose.
pub fn score(
    pose: &RelativePose,
    correspondences: &[Correspondence],
    threshold: f64,
) -> (Vec<bool>, usize, f64) {
    let mut mask = Vec::with_capacity(correspondences.len());
    let mut count = 0;
    let mut sum = 0.0;
    for c in correspondences {
        let r = epipolar_residual(pose, c, ShutterModel::Linearized);
        let inlier = r.abs() <= threshold;
        if inlier {
            count += 1;
            sum += r * r;
        }
        mask.push(inlier);
    }
    (mask, count, sum)
}

/// The five distinct indices used in `iteration`; depends only on the seed
/// and the iteration index.
pub fn sample_indices(seed: u64, iteration: usize, n: usize, k: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    rand::seq::index::sample(&mut rng, n, k).into_vec()
}

pub fn ransac<S: MinimalSolver + ?Sized>(
    correspondences: &[Correspondence],
    r0: &Rotation,
    config: &RansacConfig,
    solver: &S,
) -> Result<RansacResult, RansacError> {
    ransac_traced(correspondences, r0, config, solver, &mut |_| {})
}

/// [`ransac`] with a callback after every iteration.
pub fn ransac_traced<S: MinimalSolver + ?Sized>(
    correspondences: &[Correspondence],
    r0: &Rotation,
    config: &RansacConfig,
    solver: &S,
    trace: &mut dyn FnMut(IterationTrace),
) -> Result<RansacResult, RansacError> {
    config.validate()?;
    let n = correspondences.len();
    if n < config.min_sample {
        return Err(RansacError::InsufficientData { needed: config.min_sample, got: n });
    }

    let mut best: Option<(RelativePose, Vec<bool>, usize, f64)> = None;
    let mut sample = Vec::with_capacity(config.min_sample);
    for iteration in 0..config.max_iterations {
        sample.clear();
        sample.extend(sample_indices(config.seed, iteration, n, config.min_sample).into_iter().map(|k| correspondences[k]));
        let hypotheses = solver.hypotheses(&sample, r0);
        for pose in &hypotheses {
            let (mask, count, sum) = score(pose, correspondences, config.inlier_threshold);
            let better = match &best {
                None => true,
                Some((_, _, c, s)) => count > *c || (count == *c && sum < *s),
            };
            if better {
                best = Some((*pose, mask, count, sum));
            }
        }
        trace(IterationTrace { iteration, hypotheses: hypotheses.len(), best_score: best.as_ref().map_or(0, |b| b.2) });
    }

    let (pose, inlier_mask, score, residual_sum) = best.ok_or(RansacError::NoValidHypothesis)?;
    let inliers: Vec<Correspondence> =
        correspondences.iter().zip(&inlier_mask).filter(|(_, m)| **m).map(|(c, _)| *c).collect();
    let pose = solver.finalize(pose, &inliers);
    Ok(RansacResult { pose, inlier_mask, score, iterations_run: config.max_iterations, residual_sum })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rotation_error, translation_error};
    use crate::synth::{add_noise, add_outliers, generate_scene, MotionConfig, NoiseConfig, SceneConfig};

    #[test]
    fn config_validation() {
        assert!(RansacConfig::default().validate().is_ok());
        assert!(RansacConfig { inlier_threshold: 0.0, ..Default::default() }.validate().is_err());
        assert!(RansacConfig { max_iterations: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn too_few_correspondences() {
        let scene = generate_scene(&SceneConfig::default(), &MotionConfig::still(), ShutterModel::Exact).unwrap();
        let corrs = scene.correspondences().unwrap();
        assert_eq!(
            ransac(&corrs[..4], &Rotation::identity(), &RansacConfig::default(), &GsrpSolver),
            Err(RansacError::InsufficientData { needed: 5, got: 4 })
        );
    }

    #[test]
    fn samples_are_distinct_and_reproducible() {
        for it in 0..50 {
            let s = sample_indices(3, it, 12, 5);
            let mut d = s.clone();
            d.sort();
            d.dedup();
            assert_eq!(d.len(), 5);
            assert_eq!(s, sample_indices(3, it, 12, 5));
        }
        assert_ne!(sample_indices(3, 0, 100, 5), sample_indices(3, 1, 100, 5));
    }

    #[test]
    fn noiseless_linearized_scene_is_recovered() {
        let cfg = SceneConfig { n_points: 100, seed: 11, ..Default::default() };
        let scene = generate_scene(&cfg, &MotionConfig::uniform(2.0, 0.0), ShutterModel::Linearized).unwrap();
        let corrs = scene.correspondences().unwrap();
        let solver = GrsrpSolver::default();
        let res = ransac(&corrs, &scene.truth.pose.rotation, &RansacConfig::default(), &solver).unwrap();
        assert_eq!(res.score, corrs.len());
        assert!(rotation_error(&scene.truth.pose.rotation, &res.pose.rotation) < 0.01);
        assert!(translation_error(&scene.truth.pose.translation, &res.pose.translation).unwrap() < 0.05);
    }

    #[test]
    fn trace_is_monotone_and_rescoring_matches() {
        let cfg = SceneConfig { seed: 12, ..Default::default() };
        let scene = generate_scene(&cfg, &MotionConfig::uniform(1.5, 0.0), ShutterModel::Exact).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut noisy = add_noise(&scene, &NoiseConfig::default(), &mut rng);
        add_outliers(&mut noisy, 0.2, &mut rng);
        let corrs = noisy.correspondences().unwrap();
        let solver = GrsrpSolver::default();
        let config = RansacConfig { max_iterations: 60, ..Default::default() };
        let mut scores = Vec::new();
        let res = ransac_traced(&corrs, &scene.truth.pose.rotation, &config, &solver, &mut |t| scores.push(t.best_score))
            .unwrap();
        assert_eq!(scores.len(), 60);
        assert!(scores.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*scores.last().unwrap(), res.score);
        let (mask, count, _) = score(&res.pose, &corrs, config.inlier_threshold);
        assert_eq!(mask, res.inlier_mask);
        assert_eq!(count, res.score);
        assert_eq!(res.inlier_mask.iter().filter(|m| **m).count(), res.score);

        let again = ransac(&corrs, &scene.truth.pose.rotation, &config, &solver).unwrap();
        assert_eq!(again, res);
    }

    #[test]
    fn outliers_are_rejected() {
        let cfg = SceneConfig { n_points: 100, seed: 13, ..Default::default() };
        let scene = generate_scene(&cfg, &MotionConfig::uniform(1.5, 12.0), ShutterModel::Exact).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut noisy = add_noise(&scene, &NoiseConfig::default(), &mut rng);
        let truth = add_outliers(&mut noisy, 0.2, &mut rng);
        let corrs = noisy.correspondences().unwrap();
        let gs = ransac(&corrs, &Rotation::identity(), &RansacConfig::default(), &GsrpSolver).unwrap();
        let res = ransac(&corrs, &gs.pose.rotation, &RansacConfig::default(), &GrsrpSolver::default()).unwrap();
        let inliers = truth.iter().filter(|t| **t).count();
        let recalled = truth.iter().zip(&res.inlier_mask).filter(|(t, m)| **t && **m).count();
        assert!(recalled as f64 >= 0.9 * inliers as f64, "recall {recalled}/{inliers}");
    }

    #[test]
    fn sign_resolution_prefers_points_in_front() {
        let scene = generate_scene(&SceneConfig { seed: 14, ..Default::default() }, &MotionConfig::uniform(1.0, 0.0), ShutterModel::Exact)
            .unwrap();
        let corrs = scene.correspondences().unwrap();
        let truth = scene.truth.pose;
        assert_eq!(resolve_translation_sign(&truth.with_flipped_translation(), &corrs), truth);
        assert_eq!(cheirality_count(&truth, &corrs), corrs.len());
    }
}
