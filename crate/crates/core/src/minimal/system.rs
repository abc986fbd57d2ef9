//! Construction of the six-equation system in the unknowns `(a, t)`.
//!
//! Each epipolar equation is
//! `m_j^T [t]x (I + v_j [w'_j]x)^T R0 (I + [a]x) (I + v_i [w'_i]x) m_i`,
//! which is bilinear in `t` and `(1, a)`: twelve monomials `t_k` and
//! `a_l t_k`. The sixth equation is `t1^2 + t2^2 + t3^2 - 1`.

use crate::geometry::{linearized_rotation, Correspondence, Rotation};
use crate::poly::{Coefficient, Monomial, Polynomial};

pub const NUM_UNKNOWNS: usize = 6;
pub const VARIABLE_NAMES: [&str; NUM_UNKNOWNS] = ["a1", "a2", "a3", "t1", "t2", "t3"];

/// Index of `a_l` (l = 0..3) among the unknowns.
pub const fn a_var(l: usize) -> usize {
    l
}

/// Index of `t_k` (k = 0..3) among the unknowns.
pub const fn t_var(k: usize) -> usize {
    3 + k
}

pub type Mono = Monomial<NUM_UNKNOWNS>;
pub type Poly<T> = Polynomial<T, NUM_UNKNOWNS>;

/// Monomial of slot `4 k + l` in an epipolar equation: `t_k` for `l == 0`,
/// `a_{l-1} t_k` otherwise.
pub fn epipolar_support() -> [Mono; 12] {
    let mut out = [Mono::one(); 12];
    for k in 0..3 {
        out[4 * k] = Mono::var(t_var(k));
        for l in 0..3 {
            out[4 * k + 1 + l] = Mono::var(t_var(k)).mul(&Mono::var(a_var(l)));
        }
    }
    out
}

/// Monomials of the scale equation, in slot order `t1^2, t2^2, t3^2, 1`.
pub fn scale_support() -> [Mono; 4] {
    let sq = |k: usize| Mono::var(t_var(k)).mul(&Mono::var(t_var(k)));
    [sq(0), sq(1), sq(2), Mono::one()]
}

pub fn scale_coefficients<T: Coefficient>() -> [T; 4] {
    [T::one(), T::one(), T::one(), -T::one()]
}

type V3<T> = [T; 3];
type M3<T> = [[T; 3]; 3];

fn mat_vec<T: Coefficient>(m: &M3<T>, v: &V3<T>) -> V3<T> {
    [0, 1, 2].map(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
}

fn cross<T: Coefficient>(a: &V3<T>, b: &V3<T>) -> V3<T> {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn transpose_mul<T: Coefficient>(a: &M3<T>, b: &M3<T>) -> M3<T> {
    let mut out = [[T::zero(); 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = a[0][r] * b[0][c] + a[1][r] * b[1][c] + a[2][r] * b[2][c];
        }
    }
    out
}

/// Raw inputs of one epipolar equation over an arbitrary coefficient ring.
#[derive(Clone, Copy, Debug)]
pub struct EquationInput<T> {
    /// Homogeneous image point in view i.
    pub m_i: V3<T>,
    /// Homogeneous image point in view j.
    pub m_j: V3<T>,
    /// Instant rotation of the row in view i.
    pub inst_i: M3<T>,
    /// Instant rotation of the row in view j.
    pub inst_j: M3<T>,
}

/// Slot coefficients (see [`epipolar_support`]) of one epipolar equation.
///
/// With `Q = inst_j^T R0` and `p = inst_i m_i` the residual is
/// `t . ((Q (p + a x p)) x m_j)`.
pub fn epipolar_coefficients<T: Coefficient>(input: &EquationInput<T>, r0: &M3<T>) -> [T; 12] {
    let q = transpose_mul(&input.inst_j, r0);
    let p = mat_vec(&input.inst_i, &input.m_i);
    let g0 = cross(&mat_vec(&q, &p), &input.m_j);
    let mut out = [T::zero(); 12];
    for k in 0..3 {
        out[4 * k] = g0[k];
    }
    for l in 0..3 {
        let mut e = [T::zero(); 3];
        e[l] = T::one();
        let gl = cross(&mat_vec(&q, &cross(&e, &p)), &input.m_j);
        for k in 0..3 {
            out[4 * k + 1 + l] = gl[k];
        }
    }
    out
}

/// Numeric coefficients of the five epipolar equations in slot order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemCoefficients<T> {
    pub epipolar: [[T; 12]; 5],
}

impl<T: Coefficient> SystemCoefficients<T> {
    pub fn from_inputs(inputs: &[EquationInput<T>; 5], r0: &M3<T>) -> Self {
        SystemCoefficients { epipolar: inputs.each_ref().map(|inp| epipolar_coefficients(inp, r0)) }
    }

    /// Coefficient of `slot` in equation `eq` (`eq == 5` is the scale equation).
    pub fn coefficient(&self, eq: usize, slot: usize) -> T {
        if eq < 5 {
            self.epipolar[eq][slot]
        } else {
            scale_coefficients::<T>()[slot]
        }
    }

    pub fn polynomials(&self) -> Vec<Poly<T>> {
        let support = epipolar_support();
        let mut eqs: Vec<Poly<T>> = self
            .epipolar
            .iter()
            .map(|c| {
                let mut p = Poly::zero();
                for (m, v) in support.iter().zip(c.iter()) {
                    p.add_term(*m, *v);
                }
                p
            })
            .collect();
        let mut s = Poly::zero();
        for (m, v) in scale_support().iter().zip(scale_coefficients::<T>()) {
            s.add_term(*m, v);
        }
        eqs.push(s);
        eqs
    }
}

/// Five rolling-shutter correspondences plus the rotation the relative
/// rotation is linearised around.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinimalProblem {
    pub correspondences: [Correspondence; 5],
    pub r0: Rotation,
}

impl MinimalProblem {
    pub fn new(correspondences: &[Correspondence], r0: Rotation) -> Option<Self> {
        let correspondences: [Correspondence; 5] = correspondences.try_into().ok()?;
        Some(MinimalProblem { correspondences, r0 })
    }

    pub fn coefficients(&self) -> SystemCoefficients<f64> {
        let inputs = self.correspondences.each_ref().map(|c| {
            let to_m3 = |m: nalgebra::Matrix3<f64>| [0, 1, 2].map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]]);
            let mi = c.obs_i.point.lift();
            let mj = c.obs_j.point.lift();
            EquationInput {
                m_i: [mi.x, mi.y, mi.z],
                m_j: [mj.x, mj.y, mj.z],
                inst_i: to_m3(linearized_rotation(&c.obs_i.w_scaled, c.obs_i.row)),
                inst_j: to_m3(linearized_rotation(&c.obs_j.w_scaled, c.obs_j.row)),
            }
        });
        let r = self.r0.matrix();
        let r0 = [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]);
        SystemCoefficients::from_inputs(&inputs, &r0)
    }
}

/// The six polynomials of a minimal problem.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialSystem {
    pub equations: Vec<Poly<f64>>,
}

impl PolynomialSystem {
    pub fn from_coefficients(c: &SystemCoefficients<f64>) -> Self {
        PolynomialSystem { equations: c.polynomials() }
    }

    /// Recovers the slot coefficients of the five epipolar equations.
    pub fn coefficients(&self) -> SystemCoefficients<f64> {
        let support = epipolar_support();
        let mut epipolar = [[0.0; 12]; 5];
        for (eq, row) in self.equations.iter().take(5).zip(epipolar.iter_mut()) {
            for (slot, m) in support.iter().enumerate() {
                row[slot] = eq.coeff(m);
            }
        }
        SystemCoefficients { epipolar }
    }

    /// Values of the six polynomials at `(a1, a2, a3, t1, t2, t3)`.
    pub fn evaluate(&self, x: &[f64; NUM_UNKNOWNS]) -> [f64; NUM_UNKNOWNS] {
        let mut out = [0.0; NUM_UNKNOWNS];
        for (o, eq) in out.iter_mut().zip(&self.equations) {
            *o = eq.eval(x);
        }
        out
    }

    /// Largest coefficient magnitude over the whole system.
    pub fn coefficient_norm(&self) -> f64 {
        self.equations.iter().fold(0.0, |m, e| m.max(e.max_abs_coeff()))
    }
}

/// Expands the epipolar constraints of `problem` into polynomial form.
pub fn build_system(problem: &MinimalProblem) -> PolynomialSystem {
    PolynomialSystem::from_coefficients(&problem.coefficients())
}
