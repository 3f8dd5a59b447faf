use nalgebra::{DMatrix, DVector};

/// Solves `a x = b` for symmetric positive definite `a`. Returns `None` when
/// the Cholesky factorisation fails or a pivot is below `rel_tol` times the
/// largest diagonal entry.
pub(crate) fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> Option<DVector<f64>> {
    let scale = a.diagonal().iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if !(scale > 0.0) {
        return None;
    }
    let chol = a.cholesky()?;
    let min_pivot = chol
        .l()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v * v));
    if !(min_pivot > rel_tol * scale) {
        return None;
    }
    Some(chol.solve(b))
}

/// Weighted cross-product `sum_i w_i a_i b_i'` over row slices.
pub(crate) fn weighted_outer<'a>(
    dim: usize,
    rows: impl Iterator<Item = (f64, &'a [f64], &'a [f64])>,
) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    for (w, a, b) in rows {
        for r in 0..dim {
            for c in 0..dim {
                m[(r, c)] += w * a[r] * b[c];
            }
        }
    }
    m
}
