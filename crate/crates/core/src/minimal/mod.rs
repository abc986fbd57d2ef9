//! Minimal solver for the gyroscope-aided rolling-shutter relative pose.
//!
//! Five correspondences, the per-frame angular velocities and an initial
//! rotation `R0` give six polynomial equations in the rotation correction
//! `a` and the translation `t`. They have 20 complex solutions, found from
//! the eigenvectors of a 20 x 20 action matrix.

pub mod generator;
pub mod system;
pub mod template;

use nalgebra::Matrix3;
use num_complex::Complex64;
use thiserror::Error;

use crate::geometry::{nearest_rotation, skew, RelativePose, Rotation, Vec3};
use crate::linalg::eigenpairs;
pub use system::{build_system, MinimalProblem, PolynomialSystem, SystemCoefficients, NUM_UNKNOWNS};
pub use template::{default_template, EliminationTemplate, Reduction, TemplateError};

/// Imaginary parts at or above this magnitude mark a root as complex.
pub const IMAGINARY_TOLERANCE: f64 = 1e-6;
/// Relative pivot threshold of the template elimination.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

/// One eigenvector-extracted solution of the polynomial system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawRoot {
    /// `(a1, a2, a3, t1, t2, t3)`.
    pub values: [Complex64; NUM_UNKNOWNS],
    pub eigenvalue: Complex64,
    pub real: bool,
}

impl RawRoot {
    pub fn real_values(&self) -> [f64; NUM_UNKNOWNS] {
        self.values.map(|v| v.re)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub a: Vec3,
    /// Unit translation.
    pub t: Vec3,
    pub pose: RelativePose,
    /// Index into [`SolutionSet::roots`].
    pub root: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolutionSet {
    /// All roots in eigenvalue order (real part, then imaginary part).
    pub roots: Vec<RawRoot>,
    /// Real roots converted to poses, in the same order.
    pub candidates: Vec<Candidate>,
}

impl SolutionSet {
    pub fn poses(&self) -> impl Iterator<Item = &RelativePose> {
        self.candidates.iter().map(|c| &c.pose)
    }
}

/// Solves a minimal problem with the bundled template.
pub fn solve_default(problem: &MinimalProblem) -> Result<SolutionSet, SolverError> {
    solve(problem, default_template())
}

pub fn solve(problem: &MinimalProblem, template: &EliminationTemplate) -> Result<SolutionSet, SolverError> {
    solve_coefficients(&problem.coefficients(), &problem.r0, template)
}

/// Solves the system given by its epipolar coefficients directly.
pub fn solve_coefficients(
    coeffs: &SystemCoefficients<f64>,
    r0: &Rotation,
    template: &EliminationTemplate,
) -> Result<SolutionSet, SolverError> {
    if coeffs.epipolar.iter().flatten().any(|v| !v.is_finite()) {
        return Err(SolverError::DegenerateInput("non-finite coefficients".into()));
    }
    let action = match template.reduce(coeffs, PIVOT_TOLERANCE) {
        Reduction::Action(m) => m,
        Reduction::SmallPivot { column, pivot } => {
            log::debug!("template pivot {pivot:e} at column {column}, retrying with QR");
            template
                .reduce_qr(coeffs)
                .ok_or_else(|| SolverError::NumericalFailure(format!("small pivot {pivot:e} at column {column}")))?
        }
    };
    let pairs = eigenpairs(&action).ok_or_else(|| SolverError::NumericalFailure("eigen decomposition failed".into()))?;

    let pos = template.unknown_positions();
    let mut roots = Vec::with_capacity(pairs.len());
    for (lambda, v) in &pairs {
        let one = v[pos[0]];
        let mut values = [Complex64::new(f64::NAN, 0.0); NUM_UNKNOWNS];
        if one.norm() > 0.0 {
            for (k, val) in values.iter_mut().enumerate() {
                *val = v[pos[k + 1]] / one;
            }
        }
        let finite = values.iter().all(|c| c.re.is_finite() && c.im.is_finite());
        let real = finite && values.iter().all(|c| c.im.abs() < IMAGINARY_TOLERANCE);
        if real {
            let polished = polish(coeffs, values.map(|c| c.re));
            values = polished.map(|v| Complex64::new(v, 0.0));
        }
        roots.push(RawRoot { values, eigenvalue: *lambda, real });
    }

    let r0m = r0.matrix();
    let mut candidates = Vec::new();
    for (i, root) in roots.iter().enumerate().filter(|(_, r)| r.real) {
        let x = root.real_values();
        let a = Vec3::new(x[0], x[1], x[2]);
        let t = Vec3::new(x[3], x[4], x[5]);
        let norm = t.norm();
        if !(norm > 1e-12) {
            continue;
        }
        let t = t / norm;
        let Ok(rotation) = nearest_rotation(&(r0m * (Matrix3::identity() + skew(&a)))) else {
            continue;
        };
        let Ok(pose) = RelativePose::new(rotation, t) else {
            continue;
        };
        candidates.push(Candidate { a, t, pose, root: i });
    }
    if candidates.is_empty() {
        return Err(SolverError::DegenerateInput("no real solution".into()));
    }
    Ok(SolutionSet { roots, candidates })
}

fn residuals(c: &SystemCoefficients<f64>, x: &[f64; NUM_UNKNOWNS]) -> ([f64; 6], [[f64; 6]; 6]) {
    let mut f = [0.0; 6];
    let mut jac = [[0.0; 6]; 6];
    for (eq, row) in c.epipolar.iter().enumerate() {
        for k in 0..3 {
            let mut g = row[4 * k];
            for l in 0..3 {
                g += row[4 * k + 1 + l] * x[l];
                jac[eq][l] += row[4 * k + 1 + l] * x[3 + k];
            }
            f[eq] += g * x[3 + k];
            jac[eq][3 + k] = g;
        }
    }
    f[5] = x[3] * x[3] + x[4] * x[4] + x[5] * x[5] - 1.0;
    for k in 0..3 {
        jac[5][3 + k] = 2.0 * x[3 + k];
    }
    (f, jac)
}

/// A few Newton steps on a real root; stops as soon as a step does not
/// reduce the residual.
fn polish(c: &SystemCoefficients<f64>, mut x: [f64; NUM_UNKNOWNS]) -> [f64; NUM_UNKNOWNS] {
    let norm = |f: &[f64; 6]| f.iter().map(|v| v * v).sum::<f64>();
    let (mut f, mut jac) = residuals(c, &x);
    for _ in 0..3 {
        let j = nalgebra::Matrix6::from_fn(|r, k| jac[r][k]);
        let Some(step) = j.lu().solve(&nalgebra::Vector6::from_column_slice(&f)) else { break };
        let mut next = x;
        for (v, d) in next.iter_mut().zip(step.iter()) {
            *v -= d;
        }
        let (nf, njac) = residuals(c, &next);
        if !(norm(&nf) < norm(&f)) {
            break;
        }
        (x, f, jac) = (next, nf, njac);
    }
    x
}
