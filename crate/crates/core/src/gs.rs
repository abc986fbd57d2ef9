//! Global-shutter five-point relative pose.
//!
//! The essential matrix lies in the four-dimensional null space of the
//! linear epipolar constraints, `E = x X + y Y + z Z + W`. The cubic trace
//! and determinant constraints give ten equations in the twenty monomials
//! of degree up to three in `(x, y, z)`; Gauss-Jordan elimination of the
//! cubic part leaves a 10 x 10 action matrix for multiplication by `x`.

use nalgebra::{DMatrix, SMatrix, SVector};
use thiserror::Error;

use crate::geometry::{triangulate_depths, Mat3, NormalizedPoint, RelativePose, Rotation, Vec3};
use crate::linalg::eigenpairs;
use crate::poly::Polynomial;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GsError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("essential matrix decomposition is ambiguous ({0} factorizations share the best cheirality count)")]
    AmbiguousDecomposition(usize),
}

/// Five point pairs in normalized coordinates, `(m_i, m_j)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GsMinimalProblem {
    pub pairs: [(NormalizedPoint, NormalizedPoint); 5],
}

impl GsMinimalProblem {
    pub fn new(pairs: &[(NormalizedPoint, NormalizedPoint)]) -> Result<Self, GsError> {
        let pairs: [(NormalizedPoint, NormalizedPoint); 5] = pairs
            .try_into()
            .map_err(|_| GsError::DegenerateInput(format!("expected 5 pairs, got {}", pairs.len())))?;
        for a in 0..5 {
            for b in a + 1..5 {
                if pairs[a] == pairs[b] {
                    return Err(GsError::DegenerateInput(format!("pairs {a} and {b} are identical")));
                }
            }
        }
        Ok(GsMinimalProblem { pairs })
    }
}

type P3 = Polynomial<f64, 3>;

/// Monomials of degree <= 3 in `(x, y, z)`, cubic ones first.
const MONOMIALS: [[u8; 3]; 20] = [
    [3, 0, 0],
    [2, 1, 0],
    [2, 0, 1],
    [1, 2, 0],
    [1, 1, 1],
    [1, 0, 2],
    [0, 3, 0],
    [0, 2, 1],
    [0, 1, 2],
    [0, 0, 3],
    [2, 0, 0],
    [1, 1, 0],
    [1, 0, 1],
    [0, 2, 0],
    [0, 1, 1],
    [0, 0, 2],
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [0, 0, 0],
];

/// Essential matrix candidates, scaled to unit Frobenius norm. At most ten.
pub fn gs_five_point(problem: &GsMinimalProblem) -> Result<Vec<Mat3>, GsError> {
    // Row n holds the coefficients of E (row-major) in m_j^T E m_i.
    let mut q = SMatrix::<f64, 9, 9>::zeros();
    for (n, (pi, pj)) in problem.pairs.iter().enumerate() {
        let (mi, mj) = (pi.lift(), pj.lift());
        for a in 0..3 {
            for b in 0..3 {
                q[(n, 3 * a + b)] = mj[a] * mi[b];
            }
        }
    }
    let svd = q.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| GsError::DegenerateInput("SVD failed".into()))?;
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s = &svd.singular_values;
    if !(s[order[4]] > 1e-10 * s[order[0]]) {
        return Err(GsError::DegenerateInput("linear constraints are rank deficient".into()));
    }
    let basis: [SVector<f64, 9>; 4] = std::array::from_fn(|k| v_t.row(order[5 + k]).transpose());

    // E as a matrix of linear polynomials in (x, y, z).
    let e: [[P3; 3]; 3] = std::array::from_fn(|r| {
        std::array::from_fn(|c| {
            let idx = 3 * r + c;
            let mut p = P3::constant(basis[3][idx]);
            for (v, b) in basis.iter().take(3).enumerate() {
                p = &p + &P3::var(v).scale(b[idx]);
            }
            p
        })
    });
    let mut constraints: Vec<P3> = Vec::with_capacity(10);
    constraints.push(det3(&e));
    let eet: [[P3; 3]; 3] = std::array::from_fn(|r| {
        std::array::from_fn(|c| (0..3).fold(P3::zero(), |acc, k| &acc + &(&e[r][k] * &e[c][k])))
    });
    let trace = &(&eet[0][0] + &eet[1][1]) + &eet[2][2];
    for r in 0..3 {
        for c in 0..3 {
            let eete = (0..3).fold(P3::zero(), |acc, k| &acc + &(&eet[r][k] * &e[k][c]));
            constraints.push(&eete.scale(2.0) - &(&trace * &e[r][c]));
        }
    }

    let mut a = DMatrix::<f64>::zeros(10, 20);
    for (r, p) in constraints.iter().enumerate() {
        for (c, m) in MONOMIALS.iter().enumerate() {
            a[(r, c)] = p.coeff(&crate::poly::Monomial(*m));
        }
    }
    let lu = a.columns(0, 10).into_owned().lu();
    let b = lu
        .solve(&a.columns(10, 10).into_owned())
        .filter(|b| b.iter().all(|v| v.is_finite()))
        .ok_or_else(|| GsError::DegenerateInput("cubic constraints are singular".into()))?;

    // Basis [x^2, xy, xz, y^2, yz, z^2, x, y, z, 1]; rows of the action
    // matrix for multiplication by x.
    let mut m = DMatrix::<f64>::zeros(10, 10);
    for r in 0..6 {
        for c in 0..10 {
            m[(r, c)] = -b[(r, c)];
        }
    }
    m[(6, 0)] = 1.0;
    m[(7, 1)] = 1.0;
    m[(8, 2)] = 1.0;
    m[(9, 6)] = 1.0;
    let pairs = eigenpairs(&m).ok_or_else(|| GsError::DegenerateInput("eigen decomposition failed".into()))?;

    let mut out = Vec::new();
    for (lambda, v) in pairs {
        if lambda.im.abs() > 1e-8 * lambda.norm().max(1.0) || v[9].norm() == 0.0 {
            continue;
        }
        let (x, y, z) = ((v[6] / v[9]).re, (v[7] / v[9]).re, (v[8] / v[9]).re);
        let ev = basis[0] * x + basis[1] * y + basis[2] * z + basis[3];
        let em = Mat3::from_row_slice(ev.as_slice());
        let n = em.norm();
        if n.is_finite() && n > 0.0 {
            out.push(em / n);
        }
    }
    Ok(out)
}

fn det3(e: &[[P3; 3]; 3]) -> P3 {
    let minor = |a: &P3, b: &P3, c: &P3, d: &P3| &(a * d) - &(b * c);
    let t0 = &e[0][0] * &minor(&e[1][1], &e[1][2], &e[2][1], &e[2][2]);
    let t1 = &e[0][1] * &minor(&e[1][0], &e[1][2], &e[2][0], &e[2][2]);
    let t2 = &e[0][2] * &minor(&e[1][0], &e[1][1], &e[2][0], &e[2][1]);
    &(&t0 - &t1) + &t2
}

/// The four `(R, t)` factorizations of an essential matrix.
pub fn essential_factorizations(e: &Mat3) -> Result<[(Rotation, Vec3); 4], GsError> {
    let svd = e.svd(true, true);
    let (mut u, mut v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(GsError::DegenerateInput("SVD failed".into())),
    };
    if u.determinant() < 0.0 {
        u = -u;
    }
    if v_t.determinant() < 0.0 {
        v_t = -v_t;
    }
    // Singular values are sorted, so the null direction is the last column.
    let w = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = Rotation::try_from_matrix(u * w * v_t).map_err(|e| GsError::DegenerateInput(e.to_string()))?;
    let r2 = Rotation::try_from_matrix(u * w.transpose() * v_t).map_err(|e| GsError::DegenerateInput(e.to_string()))?;
    let t = u.column(2).into_owned();
    Ok([(r1, t), (r1, -t), (r2, t), (r2, -t)])
}

/// Picks the factorization of `e` that puts the most points in front of
/// both cameras.
pub fn decompose_essential(e: &Mat3, pairs: &[(NormalizedPoint, NormalizedPoint)]) -> Result<RelativePose, GsError> {
    let options = essential_factorizations(e)?;
    let counts = options.map(|(r, t)| {
        pairs
            .iter()
            .filter(|(pi, pj)| {
                matches!(triangulate_depths(r.matrix(), &t, &pi.lift(), &pj.lift()), Some((zi, zj)) if zi > 0.0 && zj > 0.0)
            })
            .count()
    });
    let best = *counts.iter().max().expect("four options");
    let ties = counts.iter().filter(|&&c| c == best).count();
    if ties > 1 {
        return Err(GsError::AmbiguousDecomposition(ties));
    }
    let k = counts.iter().position(|&c| c == best).expect("maximum exists");
    let (r, t) = options[k];
    RelativePose::from_direction(r, t).map_err(|e| GsError::DegenerateInput(e.to_string()))
}

/// All poses from five point pairs, decomposed with those same pairs.
/// Essential matrices whose decomposition is ambiguous are dropped.
pub fn gs_relative_poses(problem: &GsMinimalProblem) -> Result<Vec<RelativePose>, GsError> {
    Ok(gs_five_point(problem)?.iter().filter_map(|e| decompose_essential(e, &problem.pairs).ok()).collect())
}
