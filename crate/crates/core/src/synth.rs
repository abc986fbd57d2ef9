//! Synthetic two-view rolling-shutter scenes.
//!
//! Camera `i` sits at the origin; camera `j` has pose `(R, t)` with
//! `X_j = R X_i + t`. A world point `X` (in camera `i` coordinates) seen on
//! row `v` of view `i` is at `A_i(v)^-1 X - v λ d_i`, and on row `v` of view
//! `j` at `A_j(v)^-1 R X + t - v λ d_j`, where `A(v)` is the instant rotation
//! of the row and `d` the linear velocity. The row itself is found as the
//! fixed point of "project, read off the row".

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    instant_rotation, Correspondence, GeometryError, Mat3, NormalizedPoint, RelativePose, Rotation, RsFrameObservation,
    ShutterModel, Vec3,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("only {survivors} correspondences survived culling (need {needed})")]
    GenerationFailed { survivors: usize, needed: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Minimum number of correspondences a generated scene must keep.
pub const MIN_SURVIVORS: usize = 20;
/// Refill rounds for culled points.
pub const RESCUE_ROUNDS: usize = 10;
const FIXED_POINT_ITERATIONS: usize = 50;
const FIXED_POINT_TOLERANCE: f64 = 1e-8;

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub focal: f64,
    pub principal_point: [f64; 2],
    pub image_size: [f64; 2],
}

impl Intrinsics {
    pub fn normalize(&self, pixel: [f64; 2]) -> Result<NormalizedPoint, GeometryError> {
        NormalizedPoint::new(
            (pixel[0] - self.principal_point[0]) / self.focal,
            (pixel[1] - self.principal_point[1]) / self.focal,
        )
    }

    /// Pixel of a camera-frame point; `None` behind the camera.
    pub fn project(&self, x: &Vec3) -> Option<[f64; 2]> {
        if !(x.z > 1e-9) {
            return None;
        }
        Some([self.focal * x.x / x.z + self.principal_point[0], self.focal * x.y / x.z + self.principal_point[1]])
    }

    pub fn contains(&self, pixel: [f64; 2]) -> bool {
        (0.0..self.image_size[0]).contains(&pixel[0]) && (0.0..self.image_size[1]).contains(&pixel[1])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SceneStructure {
    /// Points spread through the first camera's viewing frustum.
    Frustum,
    /// Points on a single plane facing the first camera.
    Plane,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub n_points: usize,
    pub min_depth: f64,
    pub max_depth: f64,
    /// Standard deviation of each Euler angle of camera `j`, degrees.
    pub rot_std_deg: f64,
    /// Standard deviation of each translation component, meters.
    pub trans_std: f64,
    pub image_width: f64,
    pub image_height: f64,
    pub focal: f64,
    /// Seconds per image row.
    pub readout: f64,
    pub structure: SceneStructure,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            n_points: 150,
            min_depth: 2.0,
            max_depth: 60.0,
            rot_std_deg: 10.0,
            trans_std: 2.0,
            image_width: 1920.0,
            image_height: 1080.0,
            focal: 640.0,
            readout: 60e-6,
            structure: SceneStructure::Frustum,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let positive = [
            ("n_points", self.n_points as f64),
            ("min_depth", self.min_depth),
            ("max_depth", self.max_depth),
            ("rot_std_deg", self.rot_std_deg),
            ("trans_std", self.trans_std),
            ("image_width", self.image_width),
            ("image_height", self.image_height),
            ("focal", self.focal),
            ("readout", self.readout),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SynthError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.min_depth >= self.max_depth {
            return Err(SynthError::InvalidConfig("min_depth must be below max_depth".into()));
        }
        if self.readout * self.image_height >= 0.1 {
            return Err(SynthError::InvalidConfig(format!(
                "frame readout {} s is implausibly long",
                self.readout * self.image_height
            )));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            focal: self.focal,
            principal_point: [self.image_width / 2.0, self.image_height / 2.0],
            image_size: [self.image_width, self.image_height],
        }
    }
}

/// Speeds of the two frames; directions are drawn per scene.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionConfig {
    /// rad/s for views i and j.
    pub angular_speed: [f64; 2],
    /// m/s for views i and j.
    pub linear_speed: [f64; 2],
}

impl MotionConfig {
    pub fn still() -> Self {
        MotionConfig { angular_speed: [0.0; 2], linear_speed: [0.0; 2] }
    }

    pub fn uniform(angular: f64, linear: f64) -> Self {
        MotionConfig { angular_speed: [angular; 2], linear_speed: [linear; 2] }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.angular_speed.iter().chain(&self.linear_speed).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(SynthError::InvalidConfig("speeds must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub pixel_std: f64,
    /// rad/s, per axis.
    pub gyro_std: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { pixel_std: 1.0, gyro_std: 0.1 }
    }
}

impl NoiseConfig {
    pub fn none() -> Self {
        NoiseConfig { pixel_std: 0.0, gyro_std: 0.0 }
    }
}

/// Pixel coordinates `[x, y]` of one point in both views.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelPair {
    pub i: [f64; 2],
    pub j: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub pose: RelativePose,
    /// Metric translation of camera `j`.
    pub translation: Vec3,
    /// True angular velocities of views i and j, rad/s.
    pub angular_velocity: [Vec3; 2],
    /// Linear velocities of views i and j, m/s.
    pub linear_velocity: [Vec3; 2],
    /// Fixed-point rows `[v_i, v_j]` per correspondence.
    pub rows: Vec<[f64; 2]>,
    /// Points in the frame of camera `i` at its first row.
    pub points: Vec<Vec3>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub pixels: Vec<PixelPair>,
    /// Gyroscope readings of views i and j (noisy after [`add_noise`]).
    pub gyro: [Vec3; 2],
    pub intrinsics: Intrinsics,
    pub readout: f64,
    pub model: ShutterModel,
    pub truth: GroundTruth,
}

impl Scene {
    pub fn correspondences(&self) -> Result<Vec<Correspondence>, GeometryError> {
        correspondences_from_pixels(&self.pixels, &self.intrinsics, self.readout, self.gyro)
    }

    /// Rig used to render this scene.
    fn rig(&self) -> Rig {
        Rig {
            rotation: *self.truth.pose.rotation.matrix(),
            translation: self.truth.translation,
            w_scaled: self.truth.angular_velocity.map(|w| w * self.readout),
            d_scaled: self.truth.linear_velocity.map(|d| d * self.readout),
            model: self.model,
        }
    }

    /// Camera-frame position of point `k` seen on `row` of `view` (0 or 1).
    pub fn point_in_view(&self, k: usize, view: usize, row: f64) -> Vec3 {
        self.rig().view_point(&self.truth.points[k], view, row)
    }
}

/// Builds solver input from pixel pairs: rows are the pixel `y`
/// coordinates and `w' = readout * gyro`.
pub fn correspondences_from_pixels(
    pixels: &[PixelPair],
    intrinsics: &Intrinsics,
    readout: f64,
    gyro: [Vec3; 2],
) -> Result<Vec<Correspondence>, GeometryError> {
    let w = gyro.map(|g| g * readout);
    pixels
        .iter()
        .map(|p| {
            Ok(Correspondence::new(
                RsFrameObservation::new(intrinsics.normalize(p.i)?, p.i[1], w[0]),
                RsFrameObservation::new(intrinsics.normalize(p.j)?, p.j[1], w[1]),
            ))
        })
        .collect()
}

struct Rig {
    rotation: Mat3,
    translation: Vec3,
    w_scaled: [Vec3; 2],
    d_scaled: [Vec3; 2],
    model: ShutterModel,
}

impl Rig {
    /// Maps reference-frame coordinates into the frame of `row`.
    fn unrotate(&self, view: usize, row: f64, x: &Vec3) -> Vec3 {
        let a = instant_rotation(&self.w_scaled[view], row, self.model);
        match (self.model, view) {
            // The first-order matrix is not orthonormal; the first view
            // inverts it and the second view uses its transpose, which is
            // exactly what the linearized epipolar constraint assumes.
            (ShutterModel::Linearized, 0) => a.try_inverse().unwrap_or_else(Matrix3::identity) * x,
            _ => a.transpose() * x,
        }
    }

    fn view_point(&self, x: &Vec3, view: usize, row: f64) -> Vec3 {
        let base = if view == 0 { self.unrotate(0, row, x) } else { self.unrotate(1, row, &(self.rotation * x)) + self.translation };
        base - self.d_scaled[view] * row
    }

    /// Row-consistent projection; `None` if the point leaves the front of
    /// the camera or the iteration does not settle.
    fn project(&self, intr: &Intrinsics, x: &Vec3, view: usize) -> Option<(f64, [f64; 2])> {
        let mut v = intr.project(&self.view_point(x, view, 0.0))?[1];
        for _ in 0..FIXED_POINT_ITERATIONS {
            let px = intr.project(&self.view_point(x, view, v))?;
            if !px[1].is_finite() {
                return None;
            }
            if (px[1] - v).abs() < FIXED_POINT_TOLERANCE {
                let px = intr.project(&self.view_point(x, view, v))?;
                return Some((v, px));
            }
            v = 0.5 * v + 0.5 * px[1];
        }
        None
    }
}

fn random_direction(rng: &mut impl Rng) -> Vec3 {
    let v: [f64; 3] = UnitSphere.sample(rng);
    Vec3::new(v[0], v[1], v[2])
}

/// Renders a scene. All randomness comes from `scene.seed`.
pub fn generate_scene(scene: &SceneConfig, motion: &MotionConfig, model: ShutterModel) -> Result<Scene, SynthError> {
    scene.validate()?;
    motion.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    let intr = scene.intrinsics();

    let angle = Normal::new(0.0, scene.rot_std_deg.to_radians()).expect("positive std");
    let shift = Normal::new(0.0, scene.trans_std).expect("positive std");
    let rotation = Rotation::from_euler(angle.sample(&mut rng), angle.sample(&mut rng), angle.sample(&mut rng));
    let translation = loop {
        let t = Vec3::new(shift.sample(&mut rng), shift.sample(&mut rng), shift.sample(&mut rng));
        if t.norm() > 1e-3 {
            break t;
        }
    };
    let angular_velocity = [0, 1].map(|k| random_direction(&mut rng) * motion.angular_speed[k]);
    let linear_velocity = [0, 1].map(|k| random_direction(&mut rng) * motion.linear_speed[k]);

    // Plane through a point straight ahead, tilted by up to 30 degrees.
    let plane = match scene.structure {
        SceneStructure::Frustum => None,
        SceneStructure::Plane => {
            let depth = rng.gen_range(scene.min_depth.max(5.0).min(scene.max_depth)..=scene.max_depth.min(30.0).max(scene.min_depth));
            let tilt = Rotation::from_euler(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), 0.0);
            Some((tilt.matrix() * Vec3::z(), depth))
        }
    };

    let rig = Rig {
        rotation: *rotation.matrix(),
        translation,
        w_scaled: angular_velocity.map(|w| w * scene.readout),
        d_scaled: linear_velocity.map(|d| d * scene.readout),
        model,
    };

    let mut pixels = Vec::with_capacity(scene.n_points);
    let mut rows = Vec::with_capacity(scene.n_points);
    let mut points = Vec::with_capacity(scene.n_points);
    for _round in 0..=RESCUE_ROUNDS {
        let missing = scene.n_points - pixels.len();
        if missing == 0 {
            break;
        }
        for _ in 0..missing {
            let u = rng.gen_range(0.0..scene.image_width);
            let v = rng.gen_range(0.0..scene.image_height);
            let ray = Vec3::new((u - intr.principal_point[0]) / intr.focal, (v - intr.principal_point[1]) / intr.focal, 1.0);
            let x = match plane {
                None => ray * rng.gen_range(scene.min_depth..scene.max_depth),
                Some((n, d)) => {
                    let s = d / n.dot(&ray);
                    if !(s > 0.0 && s.is_finite()) {
                        continue;
                    }
                    ray * s
                }
            };
            let (Some((vi, pi)), Some((vj, pj))) = (rig.project(&intr, &x, 0), rig.project(&intr, &x, 1)) else {
                continue;
            };
            if !intr.contains(pi) || !intr.contains(pj) {
                continue;
            }
            pixels.push(PixelPair { i: pi, j: pj });
            rows.push([vi, vj]);
            points.push(x);
        }
    }
    if pixels.len() < MIN_SURVIVORS {
        return Err(SynthError::GenerationFailed { survivors: pixels.len(), needed: MIN_SURVIVORS });
    }

    Ok(Scene {
        pixels,
        gyro: angular_velocity,
        intrinsics: intr,
        readout: scene.readout,
        model,
        truth: GroundTruth {
            pose: RelativePose::from_direction(rotation, translation)?,
            translation,
            angular_velocity,
            linear_velocity,
            rows,
            points,
        },
    })
}

/// Gaussian pixel noise on both views and per-axis gyro noise on both
/// frames. Zero standard deviations return the scene unchanged.
pub fn add_noise(scene: &Scene, noise: &NoiseConfig, rng: &mut impl Rng) -> Scene {
    let mut out = scene.clone();
    if noise.pixel_std > 0.0 {
        let n = Normal::new(0.0, noise.pixel_std).expect("positive std");
        for p in out.pixels.iter_mut() {
            for c in p.i.iter_mut().chain(p.j.iter_mut()) {
                *c += n.sample(rng);
            }
        }
    }
    if noise.gyro_std > 0.0 {
        let n = Normal::new(0.0, noise.gyro_std).expect("positive std");
        for g in out.gyro.iter_mut() {
            *g += Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng));
        }
    }
    out
}

/// Replaces a fraction of the view-`j` pixels with uniformly random ones.
/// Returns the inlier mask.
pub fn add_outliers(scene: &mut Scene, fraction: f64, rng: &mut impl Rng) -> Vec<bool> {
    let n = scene.pixels.len();
    let count = ((n as f64) * fraction.clamp(0.0, 1.0)).round() as usize;
    let chosen = rand::seq::index::sample(rng, n, count);
    let mut inlier = vec![true; n];
    for k in chosen.iter() {
        inlier[k] = false;
        scene.pixels[k].j =
            [rng.gen_range(0.0..scene.intrinsics.image_size[0]), rng.gen_range(0.0..scene.intrinsics.image_size[1])];
    }
    inlier
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{epipolar_residual, gs_epipolar_residual};

    fn config(seed: u64) -> SceneConfig {
        SceneConfig { seed, ..SceneConfig::default() }
    }

    #[test]
    fn config_validation() {
        assert!(SceneConfig::default().validate().is_ok());
        assert!(SceneConfig { readout: 1e-3, ..SceneConfig::default() }.validate().is_err());
        assert!(SceneConfig { min_depth: 70.0, ..SceneConfig::default() }.validate().is_err());
        assert!(SceneConfig { n_points: 0, ..SceneConfig::default() }.validate().is_err());
        assert!(MotionConfig::uniform(-1.0, 0.0).validate().is_err());
    }

    #[test]
    fn still_scene_is_global_shutter() {
        let s = generate_scene(&config(1), &MotionConfig::still(), ShutterModel::Exact).unwrap();
        assert_eq!(s.pixels.len(), 150);
        for c in s.correspondences().unwrap() {
            assert!(gs_epipolar_residual(&s.truth.pose, &c).abs() < 1e-12);
        }
    }

    #[test]
    fn linearized_scene_satisfies_linearized_constraint() {
        for seed in 0..10 {
            let s = generate_scene(&config(seed), &MotionConfig::uniform(2.5, 0.0), ShutterModel::Linearized).unwrap();
            for c in s.correspondences().unwrap() {
                assert!(epipolar_residual(&s.truth.pose, &c, ShutterModel::Linearized).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn exact_scene_satisfies_exact_constraint() {
        for seed in 0..10 {
            let s = generate_scene(&config(seed), &MotionConfig::uniform(2.5, 0.0), ShutterModel::Exact).unwrap();
            for c in s.correspondences().unwrap() {
                assert!(epipolar_residual(&s.truth.pose, &c, ShutterModel::Exact).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn stored_rows_reproduce_pixels() {
        let s = generate_scene(&config(3), &MotionConfig::uniform(2.5, 20.0), ShutterModel::Exact).unwrap();
        for (k, (p, rows)) in s.pixels.iter().zip(&s.truth.rows).enumerate() {
            for (view, px) in [p.i, p.j].iter().enumerate() {
                let re = s.intrinsics.project(&s.point_in_view(k, view, rows[view])).unwrap();
                assert!((re[0] - px[0]).abs() < 1e-8 && (re[1] - px[1]).abs() < 1e-8);
                // The row is a fixed point of the projection.
                assert!((re[1] - rows[view]).abs() < 1e-6);
                assert!(s.intrinsics.contains(*px));
            }
        }
    }

    #[test]
    fn fast_rotation_distorts_rows() {
        let mut total = 0.0;
        let mut count = 0;
        for seed in 0..100 {
            let cfg = config(seed);
            let rs = generate_scene(&cfg, &MotionConfig::uniform(2.5, 0.0), ShutterModel::Exact).unwrap();
            // Same rig, frozen shutter: rotate nothing per row.
            let mut still = rs.clone();
            still.truth.angular_velocity = [Vec3::zeros(); 2];
            for (k, p) in rs.pixels.iter().enumerate() {
                let gs = rs.intrinsics.project(&still.point_in_view(k, 1, 0.0)).unwrap();
                total += (gs[1] - p.j[1]).abs();
                count += 1;
            }
        }
        assert!(total / count as f64 > 5.0, "mean row shift {}", total / count as f64);
    }

    #[test]
    fn noise_statistics_and_identity() {
        let s = generate_scene(&config(4), &MotionConfig::uniform(1.0, 4.0), ShutterModel::Exact).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(add_noise(&s, &NoiseConfig::none(), &mut rng), s);

        let gyro_only = add_noise(&s, &NoiseConfig { pixel_std: 0.0, gyro_std: 0.3 }, &mut rng);
        assert_eq!(gyro_only.pixels, s.pixels);
        assert_ne!(gyro_only.gyro, s.gyro);

        let mut samples = Vec::new();
        while samples.len() < 100_000 {
            let noisy = add_noise(&s, &NoiseConfig { pixel_std: 1.0, gyro_std: 0.0 }, &mut rng);
            for (a, b) in noisy.pixels.iter().zip(&s.pixels) {
                samples.extend([a.i[0] - b.i[0], a.i[1] - b.i[1], a.j[0] - b.j[0], a.j[1] - b.j[1]]);
            }
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let std = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std - 1.0).abs() < 0.02, "std {std}");
    }

    #[test]
    fn generation_is_deterministic_and_plane_works() {
        let a = generate_scene(&config(5), &MotionConfig::uniform(1.5, 8.0), ShutterModel::Exact).unwrap();
        let b = generate_scene(&config(5), &MotionConfig::uniform(1.5, 8.0), ShutterModel::Exact).unwrap();
        assert_eq!(a, b);
        let cfg = SceneConfig { structure: SceneStructure::Plane, ..config(6) };
        let p = generate_scene(&cfg, &MotionConfig::uniform(1.0, 0.0), ShutterModel::Exact).unwrap();
        let x0 = p.truth.points[0];
        let n = (p.truth.points[1] - x0).cross(&(p.truth.points[2] - x0)).normalize();
        for x in &p.truth.points {
            assert!((x - x0).dot(&n).abs() < 1e-8);
        }
    }

    #[test]
    fn too_few_points_fail_generation() {
        let cfg = SceneConfig { n_points: 10, ..config(7) };
        assert_eq!(
            generate_scene(&cfg, &MotionConfig::still(), ShutterModel::Exact),
            Err(SynthError::GenerationFailed { survivors: 10, needed: MIN_SURVIVORS })
        );
    }

    #[test]
    fn outliers_are_labelled() {
        let mut s = generate_scene(&config(8), &MotionConfig::uniform(1.5, 0.0), ShutterModel::Exact).unwrap();
        let orig = s.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mask = add_outliers(&mut s, 0.2, &mut rng);
        assert_eq!(mask.iter().filter(|m| !**m).count(), 30);
        for (k, m) in mask.iter().enumerate() {
            assert_eq!(*m, s.pixels[k] == orig.pixels[k]);
        }
    }
}
