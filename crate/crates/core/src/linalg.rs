//! Small dense linear-algebra helpers shared by the polynomial solvers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Eigenvalues and right eigenvectors of a real square matrix, sorted by
/// real part and then imaginary part.
///
/// Each eigenvector is scaled so that its largest entry is one. Returns
/// `None` for non-finite input or when the decomposition fails.
pub fn eigenpairs(m: &DMatrix<f64>) -> Option<Vec<(Complex64, DVector<Complex64>)>> {
    let n = m.nrows();
    if n == 0 || n != m.ncols() || m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let a = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    let evd = a.eigen().ok()?;
    let (s, u) = (evd.S(), evd.U());
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let lambda = Complex64::new(s[k].re, s[k].im);
        let mut v = DVector::from_fn(n, |i, _| Complex64::new(u[(i, k)].re, u[(i, k)].im));
        let pivot = *v.iter().max_by(|a, b| a.norm().total_cmp(&b.norm()))?;
        if !(pivot.norm() > 0.0) || !lambda.re.is_finite() || !lambda.im.is_finite() {
            return None;
        }
        v /= pivot;
        out.push((lambda, v));
    }
    out.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));
    Some(out)
}

/// Outcome of [`eliminate_trailing`].
pub enum Elimination {
    /// Solution rows for the trailing unknowns, `k x nrhs`, row-major.
    Solved(Vec<f64>),
    /// A pivot fell below the relative tolerance.
    SmallPivot { column: usize, pivot: f64 },
}

/// Solves `A X = B` for the last `k` rows of `X` by Gaussian elimination
/// with partial pivoting.
///
/// `data` is row-major `n x (n + nrhs)` holding `[A | B]` and is overwritten.
/// Elimination aborts when a pivot is below `rel_tol` times the largest row
/// norm of the input.
pub fn eliminate_trailing(data: &mut [f64], n: usize, nrhs: usize, k: usize, rel_tol: f64) -> Elimination {
    let w = n + nrhs;
    debug_assert_eq!(data.len(), n * w);
    let max_row_norm = (0..n)
        .map(|r| data[r * w..(r + 1) * w].iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let tol = rel_tol * max_row_norm;

    for col in 0..n {
        let (mut best, mut best_abs) = (col, data[col * w + col].abs());
        for r in col + 1..n {
            let v = data[r * w + col].abs();
            if v > best_abs {
                best = r;
                best_abs = v;
            }
        }
        if !(best_abs > tol) {
            return Elimination::SmallPivot { column: col, pivot: best_abs };
        }
        if best != col {
            let (a, b) = data.split_at_mut(best * w);
            a[col * w..(col + 1) * w].swap_with_slice(&mut b[..w]);
        }
        let (top, bottom) = data.split_at_mut((col + 1) * w);
        let pivot_row = &top[col * w..];
        let inv = 1.0 / pivot_row[col];
        for row in bottom.chunks_exact_mut(w) {
            let f = row[col];
            if f == 0.0 {
                continue;
            }
            let f = f * inv;
            row[col] = 0.0;
            for (x, p) in row[col + 1..].iter_mut().zip(&pivot_row[col + 1..]) {
                *x -= f * p;
            }
        }
    }

    // Back substitution restricted to the trailing k unknowns.
    let mut x = vec![0.0; k * nrhs];
    for i in (n - k..n).rev() {
        let xi = i - (n - k);
        for c in 0..nrhs {
            let mut acc = data[i * w + n + c];
            for j in i + 1..n {
                acc -= data[i * w + j] * x[(j - (n - k)) * nrhs + c];
            }
            x[xi * nrhs + c] = acc / data[i * w + i];
        }
    }
    Elimination::Solved(x)
}
