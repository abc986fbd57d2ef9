//! Rotation representations, the rolling-shutter epipolar model and the
//! pose error metrics shared by the estimators.
//!
//! Conventions: matrices act on column vectors, so a point expressed in the
//! first camera maps into the second as `X_j = R X_i + t`. A rolling-shutter
//! observation carries the image row `v` (pixels from the top row) and the
//! scaled angular velocity `w' = readout * omega` (radians per row), so the
//! instant rotation of that row is parameterised by the vector `v * w'`.

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("matrix is not a rotation (|R^T R - I| = {orthogonality:.3e}, det = {det})")]
    NotARotation { orthogonality: f64, det: f64 },
    #[error("expected a unit vector, got norm {0}")]
    NotUnit(f64),
    #[error("matrix is (near) singular, smallest singular value {0:.3e}")]
    Singular(f64),
    #[error("normalized point ({x}, {y}) is not finite or outside the plausible field of view")]
    InvalidPoint { x: f64, y: f64 },
    #[error("translation has zero length")]
    ZeroTranslation,
}

/// An element of SO(3).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rotation(Mat3);

impl Rotation {
    /// Tolerance used when validating orthonormality and the determinant.
    pub const TOLERANCE: f64 = 1e-9;

    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    pub fn try_from_matrix(m: Mat3) -> Result<Self, GeometryError> {
        let orthogonality = (m.transpose() * m - Mat3::identity()).norm();
        let det = m.determinant();
        if !orthogonality.is_finite()
            || orthogonality > Self::TOLERANCE
            || (det - 1.0).abs() > Self::TOLERANCE
        {
            return Err(GeometryError::NotARotation { orthogonality, det });
        }
        Ok(Rotation(m))
    }

    /// Wraps a matrix the caller already knows to be a rotation.
    pub(crate) fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation(m)
    }

    /// Rotation by `angle` radians about `axis` (any non-zero length).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let r = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        Rotation(*r.matrix())
    }

    /// Exponential map of a rotation vector.
    pub fn exp(rotvec: &Vec3) -> Self {
        Rotation(*Rotation3::new(*rotvec).matrix())
    }

    /// Intrinsic roll/pitch/yaw angles in radians.
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Self {
        Rotation(*Rotation3::from_euler_angles(roll, pitch, yaw).matrix())
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>) -> Self {
        Rotation(*q.to_rotation_matrix().matrix())
    }

    pub fn to_quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.0))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn compose(&self, rhs: &Rotation) -> Self {
        Rotation(self.0 * rhs.0)
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        ((self.0.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        self.compose(&rhs)
    }
}

/// A point in normalized camera coordinates (focal length divided out).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPoint {
    pub x: f64,
    pub y: f64,
}

impl NormalizedPoint {
    /// Largest accepted coordinate magnitude.
    pub const BOUND: f64 = 10.0;

    pub fn new(x: f64, y: f64) -> Result<Self, GeometryError> {
        if !x.is_finite() || !y.is_finite() || x.abs() >= Self::BOUND || y.abs() >= Self::BOUND {
            return Err(GeometryError::InvalidPoint { x, y });
        }
        Ok(NormalizedPoint { x, y })
    }

    /// Homogeneous lift `[x, y, 1]`.
    pub fn lift(&self) -> Vec3 {
        Vec3::new(self.x, self.y, 1.0)
    }
}

/// One view of a point in a rolling-shutter frame: where it was seen, on
/// which image row, and the gyroscope rate of that frame scaled by the
/// readout time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RsFrameObservation {
    pub point: NormalizedPoint,
    /// Image row `v`, in pixel rows counted from the top of the image.
    pub row: f64,
    /// `w' = readout * omega`, radians per row.
    pub w_scaled: Vec3,
}

impl RsFrameObservation {
    pub fn new(point: NormalizedPoint, row: f64, w_scaled: Vec3) -> Self {
        RsFrameObservation { point, row, w_scaled }
    }

    /// Observation with no rolling-shutter motion.
    pub fn global_shutter(point: NormalizedPoint) -> Self {
        RsFrameObservation { point, row: 0.0, w_scaled: Vec3::zeros() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub obs_i: RsFrameObservation,
    pub obs_j: RsFrameObservation,
}

impl Correspondence {
    pub fn new(obs_i: RsFrameObservation, obs_j: RsFrameObservation) -> Self {
        Correspondence { obs_i, obs_j }
    }

    /// The same correspondence with the roles of the two views exchanged.
    pub fn swapped(&self) -> Self {
        Correspondence { obs_i: self.obs_j, obs_j: self.obs_i }
    }
}

/// Relative pose of view `j` with respect to view `i`; the translation is a
/// direction only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativePose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl RelativePose {
    pub const UNIT_TOLERANCE: f64 = 1e-9;

    pub fn new(rotation: Rotation, translation: Vec3) -> Result<Self, GeometryError> {
        let n = translation.norm();
        if !n.is_finite() || (n - 1.0).abs() > Self::UNIT_TOLERANCE {
            return Err(GeometryError::NotUnit(n));
        }
        Ok(RelativePose { rotation, translation })
    }

    /// Builds a pose from a translation of arbitrary non-zero length.
    pub fn from_direction(rotation: Rotation, translation: Vec3) -> Result<Self, GeometryError> {
        let n = translation.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(GeometryError::ZeroTranslation);
        }
        Ok(RelativePose { rotation, translation: translation / n })
    }

    /// Pose of view `i` with respect to view `j`.
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        RelativePose { rotation: rt, translation: -(rt.matrix() * self.translation) }
    }

    pub fn with_flipped_translation(&self) -> Self {
        RelativePose { rotation: self.rotation, translation: -self.translation }
    }
}

/// How the per-row instant rotation is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShutterModel {
    /// Orthonormal instant rotation (Cayley map, first-order matched to the
    /// linear model).
    Exact,
    /// First-order model `I + v [w']x`.
    Linearized,
}

/// Cross-product matrix: `skew(v) * u == v.cross(u)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Cayley map `((1 - v^T v) I + 2 [v]x + 2 v v^T) / (1 + v^T v)`.
///
/// The rotation angle is `2 atan(|v|)`, so the map agrees with the
/// exponential map of `2 v` to first order.
pub fn cayley_rotation(v: &Vec3) -> Rotation {
    let vv = v.dot(v);
    let k = 1.0 + vv;
    let m = (Mat3::identity() * (1.0 - vv) + skew(v) * 2.0 + v * v.transpose() * 2.0) / k;
    Rotation::from_matrix_unchecked(m)
}

/// First-order rotation `I + row * [v]x`. Not orthonormal in general.
pub fn linearized_rotation(v: &Vec3, row: f64) -> Mat3 {
    Mat3::identity() + skew(&(v * row))
}

/// Instant rotation of image row `row` for scaled angular velocity `w_scaled`.
///
/// The exact model feeds `row * w_scaled / 2` to the Cayley map so that both
/// models share the first-order term `I + row [w']x`.
pub fn instant_rotation(w_scaled: &Vec3, row: f64, model: ShutterModel) -> Mat3 {
    match model {
        ShutterModel::Exact => *cayley_rotation(&(w_scaled * (0.5 * row))).matrix(),
        ShutterModel::Linearized => linearized_rotation(w_scaled, row),
    }
}

/// Row-dependent relative rotation `R(v_j w'_j)^T * a_rot * R(v_i w'_i)`.
pub fn rs_rotation(a_rot: &Rotation, corr: &Correspondence, model: ShutterModel) -> Mat3 {
    let ri = instant_rotation(&corr.obs_i.w_scaled, corr.obs_i.row, model);
    let rj = instant_rotation(&corr.obs_j.w_scaled, corr.obs_j.row, model);
    rj.transpose() * a_rot.matrix() * ri
}

/// Rolling-shutter essential matrix `[t]x R_{v_i v_j}` of one correspondence.
pub fn rs_essential(pose: &RelativePose, corr: &Correspondence, model: ShutterModel) -> Mat3 {
    skew(&pose.translation) * rs_rotation(&pose.rotation, corr, model)
}

/// Signed algebraic epipolar residual `m_j^T E_{v_i v_j} m_i`.
pub fn epipolar_residual(pose: &RelativePose, corr: &Correspondence, model: ShutterModel) -> f64 {
    let e = rs_essential(pose, corr, model);
    corr.obs_j.point.lift().dot(&(e * corr.obs_i.point.lift()))
}

/// Global-shutter residual `m_j^T [t]x R m_i`, ignoring rows and gyro rates.
pub fn gs_epipolar_residual(pose: &RelativePose, corr: &Correspondence) -> f64 {
    let e = skew(&pose.translation) * pose.rotation.matrix();
    corr.obs_j.point.lift().dot(&(e * corr.obs_i.point.lift()))
}

/// Depths `(z_i, z_j)` of the least-squares triangulation of
/// `z_j m_j = z_i R m_i + t`, where `R` is the supplied (row-dependent)
/// relative rotation. `None` when the rays are parallel.
pub fn triangulate_depths(rotation: &Mat3, translation: &Vec3, mi: &Vec3, mj: &Vec3) -> Option<(f64, f64)> {
    let a = -(rotation * mi);
    let b = *mj;
    // Normal equations of [a b] [z_i; z_j] = t.
    let aa = a.dot(&a);
    let ab = a.dot(&b);
    let bb = b.dot(&b);
    let det = aa * bb - ab * ab;
    if det.abs() <= 1e-14 * aa * bb {
        return None;
    }
    let at = a.dot(translation);
    let bt = b.dot(translation);
    let zi = (bb * at - ab * bt) / det;
    let zj = (aa * bt - ab * at) / det;
    Some((zi, zj))
}

/// Angle between two rotations in degrees, `acos((tr(R_gt^T R_est) - 1) / 2)`.
pub fn rotation_error(gt: &Rotation, est: &Rotation) -> f64 {
    let c = ((gt.matrix().transpose() * est.matrix()).trace() - 1.0) / 2.0;
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Geodesic distance between two unit translation directions, in degrees.
pub fn translation_error(gt: &Vec3, est: &Vec3) -> Result<f64, GeometryError> {
    for v in [gt, est] {
        let n = v.norm();
        if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
            return Err(GeometryError::NotUnit(n));
        }
    }
    Ok(gt.dot(est).clamp(-1.0, 1.0).acos().to_degrees())
}

/// Closest rotation in Frobenius norm (orthogonal Procrustes with the sign
/// of the determinant corrected).
pub fn nearest_rotation(m: &Mat3) -> Result<Rotation, GeometryError> {
    let svd = m.svd(true, true);
    let sigma_min = svd.singular_values.min();
    if !(sigma_min >= 1e-12) {
        return Err(GeometryError::Singular(sigma_min));
    }
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(GeometryError::Singular(sigma_min)),
    };
    let d = (u * v_t).determinant().signum();
    let r = u * Mat3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * v_t;
    if d > 0.0 {
        // The orthogonal polar factor; Newton's iteration recovers it to
        // working precision where the SVD loses digits on close singular
        // values.
        let mut x = *m;
        for _ in 0..30 {
            let Some(inv) = x.try_inverse() else { break };
            let next = (x + inv.transpose()) * 0.5;
            let step = (next - x).norm();
            x = next;
            if step < 1e-15 {
                break;
            }
        }
        if (x - r).norm() < 1e-6 && (x.transpose() * x - Mat3::identity()).norm() < 1e-14 {
            return Ok(Rotation::from_matrix_unchecked(x));
        }
    }
    Ok(Rotation::from_matrix_unchecked(r))
}
