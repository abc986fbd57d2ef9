//! Levenberg-Marquardt refinement of a relative pose over its inliers.
//!
//! Residuals are `m_j^T [t]x (I + v_j[w'_j]x)^T R (I + v_i[w'_i]x) m_i` per
//! correspondence plus `sqrt(w) (|t|^2 - 1)`. The rotation is kept as a unit
//! quaternion and updated by `R exp([theta]x)`; `t` is free and renormalized
//! on exit.

use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{linearized_rotation, Correspondence, GeometryError, Mat3, RelativePose, Rotation, Vec3};

/// Damping at the first step.
pub const INITIAL_DAMPING: f64 = 1e-4;
pub const MAX_DAMPING: f64 = 1e12;
/// Rejected steps at maximal damping before giving up.
pub const MAX_STALLS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefineError {
    #[error("need at least 5 inliers, got {0}")]
    InsufficientData(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("initial cost is not finite")]
    NonFinite,
    #[error("cost kept increasing at maximal damping")]
    DivergenceDetected,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    pub scale_penalty_weight: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig { max_iterations: 100, gradient_tolerance: 1e-10, step_tolerance: 1e-12, scale_penalty_weight: 1.0 }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<(), RefineError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.max_iterations == 0 {
            return Err(RefineError::InvalidConfig("max_iterations must be positive".into()));
        }
        if !positive(self.gradient_tolerance) || !positive(self.step_tolerance) || !positive(self.scale_penalty_weight) {
            return Err(RefineError::InvalidConfig("tolerances and weight must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    pub pose: RelativePose,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Accepted steps.
    pub iterations: usize,
    pub converged: bool,
    /// `|t|` before the final renormalization.
    pub translation_norm: f64,
}

/// Optimization state: rotation and unnormalized translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct State {
    pub q: UnitQuaternion<f64>,
    pub t: Vec3,
}

impl State {
    pub fn from_pose(pose: &RelativePose) -> Self {
        State { q: pose.rotation.to_quaternion(), t: pose.translation }
    }

    /// Applies a tangent step `(theta, dt)`.
    pub fn step(&self, delta: &Vector6<f64>) -> Self {
        let theta = Vec3::new(delta[0], delta[1], delta[2]);
        let dt = Vec3::new(delta[3], delta[4], delta[5]);
        State { q: self.q * UnitQuaternion::from_scaled_axis(theta), t: self.t + dt }
    }
}

struct Prepared {
    /// `A_i m_i`.
    p: Vec3,
    a_j: Mat3,
    mj: Vec3,
}

fn prepare(corrs: &[Correspondence]) -> Vec<Prepared> {
    corrs
        .iter()
        .map(|c| Prepared {
            p: linearized_rotation(&c.obs_i.w_scaled, c.obs_i.row) * c.obs_i.point.lift(),
            a_j: linearized_rotation(&c.obs_j.w_scaled, c.obs_j.row),
            mj: c.obs_j.point.lift(),
        })
        .collect()
}

fn evaluate(prep: &[Prepared], state: &State, weight: f64, jacobian: bool) -> (DVector<f64>, Option<DMatrix<f64>>) {
    let n = prep.len();
    let r = state.q.to_rotation_matrix().into_inner();
    let mut res = DVector::zeros(n + 1);
    let mut jac = jacobian.then(|| DMatrix::zeros(n + 1, 6));
    for (k, c) in prep.iter().enumerate() {
        let y = c.a_j.transpose() * (r * c.p);
        let dt = y.cross(&c.mj);
        res[k] = state.t.dot(&dt);
        if let Some(j) = jac.as_mut() {
            let z = c.a_j * c.mj.cross(&state.t);
            let dtheta = c.p.cross(&(r.transpose() * z));
            for l in 0..3 {
                j[(k, l)] = dtheta[l];
                j[(k, 3 + l)] = dt[l];
            }
        }
    }
    let sw = weight.sqrt();
    res[n] = sw * (state.t.norm_squared() - 1.0);
    if let Some(j) = jac.as_mut() {
        for l in 0..3 {
            j[(n, 3 + l)] = 2.0 * sw * state.t[l];
        }
    }
    (res, jac)
}

/// Residual vector and its Jacobian with respect to `(theta, t)`.
pub fn residuals_and_jacobian(corrs: &[Correspondence], state: &State, weight: f64) -> (DVector<f64>, DMatrix<f64>) {
    let (r, j) = evaluate(&prepare(corrs), state, weight, true);
    (r, j.expect("jacobian requested"))
}

pub fn cost(corrs: &[Correspondence], state: &State, weight: f64) -> f64 {
    evaluate(&prepare(corrs), state, weight, false).0.norm_squared()
}

pub fn refine(inliers: &[Correspondence], initial: &RelativePose, config: &RefineConfig) -> Result<RefineReport, RefineError> {
    config.validate()?;
    if inliers.len() < 5 {
        return Err(RefineError::InsufficientData(inliers.len()));
    }
    let prep = prepare(inliers);
    let w = config.scale_penalty_weight;
    let mut state = State::from_pose(initial);
    let (mut res, _) = evaluate(&prep, &state, w, false);
    let initial_cost = res.norm_squared();
    if !initial_cost.is_finite() {
        return Err(RefineError::NonFinite);
    }
    let mut cost = initial_cost;
    let mut mu = INITIAL_DAMPING;
    let mut iterations = 0;
    let mut converged = false;

    'outer: while iterations < config.max_iterations {
        let (_, jac) = evaluate(&prep, &state, w, true);
        let jac = jac.expect("jacobian requested");
        let g = jac.tr_mul(&res);
        if g.amax() < config.gradient_tolerance {
            converged = true;
            break;
        }
        let h = jac.tr_mul(&jac);
        let mut stalls = 0;
        loop {
            let mut damped = h.clone();
            for d in 0..6 {
                damped[(d, d)] += mu;
            }
            let Some(delta) = damped.cholesky().map(|c| c.solve(&(-&g))) else {
                mu = (mu * 10.0).min(MAX_DAMPING);
                continue;
            };
            let delta = Vector6::from_iterator(delta.iter().copied());
            if delta.norm() < config.step_tolerance * (state.t.norm() + 1.0 + config.step_tolerance) {
                converged = true;
                break 'outer;
            }
            let candidate = state.step(&delta);
            let (cand_res, _) = evaluate(&prep, &candidate, w, false);
            let cand_cost = cand_res.norm_squared();
            if cand_cost.is_finite() && cand_cost < cost {
                state = candidate;
                res = cand_res;
                cost = cand_cost;
                mu = (mu / 10.0).max(f64::MIN_POSITIVE);
                iterations += 1;
                break;
            }
            if mu >= MAX_DAMPING {
                stalls += 1;
                if stalls >= MAX_STALLS {
                    return Err(RefineError::DivergenceDetected);
                }
            }
            mu = (mu * 10.0).min(MAX_DAMPING);
        }
    }

    let translation_norm = state.t.norm();
    let pose = RelativePose::from_direction(Rotation::from_quaternion(&state.q), state.t)?;
    Ok(RefineReport { pose, initial_cost, final_cost: cost, iterations, converged, translation_norm })
}
