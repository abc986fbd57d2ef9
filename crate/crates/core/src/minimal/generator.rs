//! Offline construction of the elimination template.
//!
//! A probe instance with random coefficients over a prime field is expanded
//! by multiplying every equation with all monomials up to a total degree
//! bound. Exact row reduction of that Macaulay matrix under a graded reverse
//! lexicographic order gives the standard monomials (the quotient basis).
//! The rows are then pruned greedily while the reducible monomials stay
//! expressible through the basis, and the result is written out as the
//! template recipe.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::system::{t_var, EquationInput, Mono, SystemCoefficients, NUM_UNKNOWNS};
use super::template::{EliminationTemplate, TemplateError, TemplateRow, QUOTIENT_DIMENSION};
use crate::poly::{Coefficient, Fp, Grevlex};

/// Degree bound of the expanded equations.
pub const DEFAULT_MAX_DEGREE: u32 = 5;
/// Seed of the probe instance behind the bundled template.
pub const DEFAULT_PROBE_SEED: u64 = 20_191_024;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("quotient dimension {found} at the probe instance, expected {QUOTIENT_DIMENSION}")]
    QuotientDimension { found: usize },
    #[error("no variable order and action variable produced a usable template")]
    NoConfiguration,
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// Random structured instance over the prime field: points with unit last
/// coordinate, instant rotations `I + s [w]x`, and a Cayley rotation `R0`.
pub fn probe_coefficients(rng: &mut impl Rng) -> SystemCoefficients<Fp> {
    let mut r = || loop {
        let v = Fp::new(rng.gen());
        if !v.is_zero() {
            return v;
        }
    };
    let skew = |v: [Fp; 3]| {
        let z = Fp::zero();
        [[z, -v[2], v[1]], [v[2], z, -v[0]], [-v[1], v[0], z]]
    };
    let inst = |r: &mut dyn FnMut() -> Fp| {
        let s = r();
        let w = skew([r(), r(), r()]);
        let mut m = [[Fp::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = s * w[i][j] + if i == j { Fp::one() } else { Fp::zero() };
            }
        }
        m
    };
    let inputs: [EquationInput<Fp>; 5] = std::array::from_fn(|_| EquationInput {
        m_i: [r(), r(), Fp::one()],
        m_j: [r(), r(), Fp::one()],
        inst_i: inst(&mut r),
        inst_j: inst(&mut r),
    });
    let q = [r(), r(), r()];
    let qq = q[0] * q[0] + q[1] * q[1] + q[2] * q[2];
    let k_inv = (Fp::one() + qq).inv().unwrap_or(Fp::one());
    let two = Fp::from_i64(2);
    let qx = skew(q);
    let mut r0 = [[Fp::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let diag = if i == j { Fp::one() - qq } else { Fp::zero() };
            r0[i][j] = (diag + two * qx[i][j] + two * q[i] * q[j]) * k_inv;
        }
    }
    SystemCoefficients::from_inputs(&inputs, &r0)
}

/// Row echelon form over the prime field; returns the pivot columns in
/// increasing order. Rows are consumed.
pub(crate) fn pivot_columns(mut rows: Vec<Vec<Fp>>, ncols: usize) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut rank = 0;
    for c in 0..ncols {
        let Some(p) = (rank..rows.len()).find(|&r| !rows[r][c].is_zero()) else {
            continue;
        };
        rows.swap(rank, p);
        let inv = rows[rank][c].inv().expect("nonzero pivot");
        let (top, bottom) = rows.split_at_mut(rank + 1);
        let pivot = &top[rank];
        for row in bottom.iter_mut() {
            let f = row[c];
            if f.is_zero() {
                continue;
            }
            let f = f * inv;
            for k in c..ncols {
                if !pivot[k].is_zero() {
                    row[k] = row[k] - f * pivot[k];
                }
            }
        }
        pivots.push(c);
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    pivots
}

/// Expanded rows `(equation, multiplier)` with their monomial coefficients.
struct Expansion {
    rows: Vec<TemplateRow>,
    entries: Vec<Vec<(Mono, Fp)>>,
}

fn expand(coeffs: &SystemCoefficients<Fp>, max_degree: u32) -> Expansion {
    let polys = coeffs.polynomials();
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for multiplier in Mono::up_to_degree(max_degree - 2) {
        for (equation, p) in polys.iter().enumerate() {
            rows.push(TemplateRow { equation, multiplier });
            entries.push(p.terms().map(|(m, c)| (m.mul(&multiplier), *c)).collect());
        }
    }
    Expansion { rows, entries }
}

fn dense(entries: &[&Vec<(Mono, Fp)>], column: &HashMap<Mono, usize>, ncols: usize) -> Vec<Vec<Fp>> {
    entries
        .iter()
        .map(|e| {
            let mut row = vec![Fp::zero(); ncols];
            for (m, c) in e.iter() {
                if let Some(&k) = column.get(m) {
                    row[k] = *c;
                }
            }
            row
        })
        .collect()
}

/// Standard monomials of degree at most 3 at degree bound `max_degree`,
/// plus the number of standard monomials of degree exactly 4.
fn standard_monomials(coeffs: &SystemCoefficients<Fp>, order: &Grevlex<NUM_UNKNOWNS>, max_degree: u32) -> (Vec<Mono>, usize) {
    let exp = expand(coeffs, max_degree);
    let mut monos = Mono::up_to_degree(max_degree);
    order.sort_descending(&mut monos);
    let column: HashMap<Mono, usize> = monos.iter().enumerate().map(|(i, m)| (*m, i)).collect();
    let refs: Vec<&Vec<(Mono, Fp)>> = exp.entries.iter().collect();
    let pivots: HashSet<usize> = pivot_columns(dense(&refs, &column, monos.len()), monos.len()).into_iter().collect();
    let free: Vec<Mono> = (0..monos.len()).filter(|c| !pivots.contains(c)).map(|c| monos[c]).collect();
    let low = free.iter().filter(|m| m.degree() <= 3).copied().collect();
    let deg4 = free.iter().filter(|m| m.degree() == 4).count();
    (low, deg4)
}

/// Checks that the selected rows reduce every reducible monomial: with
/// columns `[E | R]` (E = everything else present outside the basis) each
/// R column must be a pivot. Returns the E columns on success.
fn reduces(
    exp: &Expansion,
    selection: &[usize],
    monos: &[Mono],
    basis: &HashSet<Mono>,
    reducible: &[Mono],
) -> Option<Vec<Mono>> {
    let mut present = HashSet::new();
    for &i in selection {
        present.extend(exp.entries[i].iter().map(|(m, _)| *m));
    }
    if !reducible.iter().all(|m| present.contains(m)) {
        return None;
    }
    let rset: HashSet<Mono> = reducible.iter().copied().collect();
    let excessive: Vec<Mono> =
        monos.iter().filter(|m| present.contains(m) && !basis.contains(m) && !rset.contains(m)).copied().collect();
    let column: HashMap<Mono, usize> = excessive.iter().chain(reducible).enumerate().map(|(i, m)| (*m, i)).collect();
    let ncols = column.len();
    let refs: Vec<&Vec<(Mono, Fp)>> = selection.iter().map(|&i| &exp.entries[i]).collect();
    let pivots = pivot_columns(dense(&refs, &column, ncols), ncols);
    let r_pivots = pivots.iter().filter(|&&c| c >= excessive.len()).count();
    (r_pivots == reducible.len()).then_some(excessive)
}

/// Orders of the form "a's and t's each in natural order, interleaved";
/// the natural order comes first.
pub fn candidate_orders() -> Vec<[usize; NUM_UNKNOWNS]> {
    let mut out = Vec::new();
    for mask in 0u32..64 {
        if mask.count_ones() != 3 {
            continue;
        }
        let positions: Vec<usize> = (0..6).filter(|p| mask >> p & 1 == 1).collect();
        let mut order = [0; NUM_UNKNOWNS];
        let (mut a, mut t) = (0, 3);
        for (p, slot) in order.iter_mut().enumerate() {
            if positions.contains(&p) {
                *slot = a;
                a += 1;
            } else {
                *slot = t;
                t += 1;
            }
        }
        out.push((positions, order));
    }
    out.sort();
    out.into_iter().map(|(_, o)| o).collect()
}

/// Builds a template for one ordering and action variable.
pub fn generate_with(
    probe_seed: u64,
    max_degree: u32,
    variable_order: [usize; NUM_UNKNOWNS],
    action_variable: usize,
) -> Result<EliminationTemplate, GeneratorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(probe_seed);
    let coeffs = probe_coefficients(&mut rng);
    let order = Grevlex { priority: variable_order };

    let (basis, _) = standard_monomials(&coeffs, &order, max_degree);
    if basis.len() != QUOTIENT_DIMENSION {
        return Err(GeneratorError::QuotientDimension { found: basis.len() });
    }
    // One degree higher the quotient must not grow: no new standard
    // monomials appear in degree 4.
    let (check, deg4) = standard_monomials(&coeffs, &order, max_degree + 1);
    if check.len() != QUOTIENT_DIMENSION || deg4 != 0 {
        return Err(GeneratorError::QuotientDimension { found: check.len() + deg4 });
    }

    let basis_set: HashSet<Mono> = basis.iter().copied().collect();
    let x = Mono::var(action_variable);
    let reducible: Vec<Mono> = basis.iter().map(|b| b.mul(&x)).filter(|m| !basis_set.contains(m)).collect();
    if reducible.iter().any(|m| m.degree() > max_degree) {
        return Err(GeneratorError::NoConfiguration);
    }

    let exp = expand(&coeffs, max_degree);
    let mut monos = Mono::up_to_degree(max_degree);
    order.sort_descending(&mut monos);

    // Drop rows that are linearly dependent on earlier ones.
    let mut selection: Vec<usize> = Vec::new();
    {
        let column: HashMap<Mono, usize> = monos.iter().enumerate().map(|(i, m)| (*m, i)).collect();
        let mut echelon: Vec<(usize, Vec<Fp>)> = Vec::new();
        for (i, e) in exp.entries.iter().enumerate() {
            let mut row = dense(&[e], &column, monos.len()).pop().expect("one row");
            for (pc, prow) in &echelon {
                let f = row[*pc];
                if !f.is_zero() {
                    for k in *pc..monos.len() {
                        if !prow[k].is_zero() {
                            row[k] = row[k] - f * prow[k];
                        }
                    }
                }
            }
            if let Some(pc) = row.iter().position(|v| !v.is_zero()) {
                let inv = row[pc].inv().expect("nonzero");
                for v in row.iter_mut() {
                    *v = *v * inv;
                }
                echelon.push((pc, row));
                selection.push(i);
            }
        }
    }
    if reduces(&exp, &selection, &monos, &basis_set, &reducible).is_none() {
        return Err(GeneratorError::NoConfiguration);
    }

    // Greedy pruning, highest-degree multipliers first.
    let mut candidates = selection.clone();
    candidates.sort_by(|&a, &b| {
        let (ma, mb) = (&exp.rows[a].multiplier, &exp.rows[b].multiplier);
        mb.degree().cmp(&ma.degree()).then_with(|| order.cmp(ma, mb)).then(a.cmp(&b))
    });
    for c in candidates {
        let trial: Vec<usize> = selection.iter().copied().filter(|&i| i != c).collect();
        if reduces(&exp, &trial, &monos, &basis_set, &reducible).is_some() {
            selection = trial;
        }
    }
    let excessive = reduces(&exp, &selection, &monos, &basis_set, &reducible).ok_or(GeneratorError::NoConfiguration)?;
    let rows: Vec<TemplateRow> = selection.iter().map(|&i| exp.rows[i]).collect();

    // Basis sorted largest first in the chosen order, as are the others.
    let mut basis = basis;
    order.sort_descending(&mut basis);
    Ok(EliminationTemplate::new(
        variable_order,
        action_variable,
        max_degree,
        probe_seed,
        basis,
        reducible,
        excessive,
        rows,
    )?)
}

/// Searches orderings and action variables (preferring `t3`, then `t1`,
/// `t2`) until a square template with a translation action variable is
/// found.
pub fn generate_template(probe_seed: u64, max_degree: u32) -> Result<EliminationTemplate, GeneratorError> {
    let mut last = GeneratorError::NoConfiguration;
    for action in [t_var(2), t_var(0), t_var(1)] {
        for order in candidate_orders() {
            match generate_with(probe_seed, max_degree, order, action) {
                Ok(t) => return Ok(t),
                Err(e) => {
                    log::debug!("order {order:?} action {action}: {e}");
                    last = e;
                }
            }
        }
    }
    Err(last)
}

/// Whether the eliminated block `[E | R]` of `template` has full rank for
/// the given instance, i.e. the template reduces that instance.
pub fn template_reduces(template: &EliminationTemplate, coeffs: &SystemCoefficients<Fp>) -> bool {
    let n = template.n_rows();
    let w = template.n_cols();
    let data = template.fill(coeffs);
    let rows: Vec<Vec<Fp>> = (0..n).map(|r| data[r * w..r * w + n].to_vec()).collect();
    pivot_columns(rows, n).len() == n
}
