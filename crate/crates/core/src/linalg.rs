//! Dense symmetric-matrix helpers: Cholesky factorization, quadratic forms,
//! explicit inversion, and cheap spectral bounds.
//!
//! Everything here works on small d×d matrices (feature-space covariances),
//! in f64, with deterministic loop order so repeated fits produce identical
//! factors bit for bit.

use ndarray::Array2;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
///
/// Returns `None` when a pivot is not strictly positive, i.e. the input is
/// not positive definite (within floating-point arithmetic).
pub fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let d = a.nrows();
    debug_assert_eq!(d, a.ncols());
    let mut l = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Some(l)
}

/// Solve `L y = b` in place for lower-triangular `L`.
pub fn solve_lower(l: &Array2<f64>, b: &mut [f64]) {
    let d = l.nrows();
    debug_assert_eq!(d, b.len());
    for i in 0..d {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[[i, k]] * b[k];
        }
        b[i] = sum / l[[i, i]];
    }
}

/// Quadratic form `diffᵀ (L Lᵀ)⁻¹ diff` given the Cholesky factor `L`:
/// forward-solve `L y = diff`, then `‖y‖²`.
///
/// `scratch` must have the same length as `diff`; it is overwritten.
pub fn quad_form(l: &Array2<f64>, diff: &[f64], scratch: &mut [f64]) -> f64 {
    scratch.copy_from_slice(diff);
    solve_lower(l, scratch);
    scratch.iter().map(|y| y * y).sum()
}

/// `log det(L Lᵀ)` from the Cholesky factor.
pub fn log_det(l: &Array2<f64>) -> f64 {
    let d = l.nrows();
    2.0 * (0..d).map(|i| l[[i, i]].ln()).sum::<f64>()
}

/// Gauss-Jordan inverse with partial pivoting. `None` for singular input.
pub fn invert(a: &Array2<f64>) -> Option<Array2<f64>> {
    let d = a.nrows();
    debug_assert_eq!(d, a.ncols());
    let mut work = a.clone();
    let mut inv = Array2::<f64>::eye(d);
    for col in 0..d {
        // Partial pivot: largest |entry| on or below the diagonal.
        let mut pivot_row = col;
        let mut pivot_abs = work[[col, col]].abs();
        for r in col + 1..d {
            let v = work[[r, col]].abs();
            if v > pivot_abs {
                pivot_abs = v;
                pivot_row = r;
            }
        }
        if pivot_abs == 0.0 || !pivot_abs.is_finite() {
            return None;
        }
        if pivot_row != col {
            for c in 0..d {
                work.swap([pivot_row, c], [col, c]);
                inv.swap([pivot_row, c], [col, c]);
            }
        }
        let pivot = work[[col, col]];
        for c in 0..d {
            work[[col, c]] /= pivot;
            inv[[col, c]] /= pivot;
        }
        for r in 0..d {
            if r == col {
                continue;
            }
            let factor = work[[r, col]];
            if factor == 0.0 {
                continue;
            }
            for c in 0..d {
                let w = work[[col, c]];
                let v = inv[[col, c]];
                work[[r, c]] -= factor * w;
                inv[[r, c]] -= factor * v;
            }
        }
    }
    Some(inv)
}

/// Gershgorin upper bound on the largest eigenvalue of a symmetric matrix.
pub fn gershgorin_max(a: &Array2<f64>) -> f64 {
    let d = a.nrows();
    let mut bound = f64::NEG_INFINITY;
    for i in 0..d {
        let mut radius = 0.0;
        for j in 0..d {
            if j != i {
                radius += a[[i, j]].abs();
            }
        }
        bound = bound.max(a[[i, i]] + radius);
    }
    bound
}

/// Symmetry check with a relative tolerance against the largest entry.
pub fn is_symmetric(a: &Array2<f64>, rel_tol: f64) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    let scale = a.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let d = a.nrows();
    for i in 0..d {
        for j in i + 1..d {
            if (a[[i, j]] - a[[j, i]]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}
