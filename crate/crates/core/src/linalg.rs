use nalgebra::{DMatrix, DVector};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub(crate) fn inf_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub(crate) fn mat_inf_norm(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub(crate) fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    m.is_square() && mat_inf_norm(&(m - m.transpose())) <= tol * (1.0 + mat_inf_norm(m))
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub(crate) fn min_sym_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.min()
}

/// Orthonormal basis of the null space of `m` (columns), via SVD.
pub(crate) fn null_space(m: &Matrix, n_cols: usize) -> Matrix {
    if m.nrows() == 0 {
        return Matrix::identity(n_cols, n_cols);
    }
    // Pad to a square-or-tall matrix so that V^T is n_cols x n_cols.
    let rows = m.nrows().max(n_cols);
    let mut padded = Matrix::zeros(rows, n_cols);
    padded.view_mut((0, 0), (m.nrows(), n_cols)).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let scale = svd.singular_values.max().max(1.0);
    let tol = 1e-10 * scale;
    let null: alloc::vec::Vec<usize> = (0..n_cols).filter(|&i| svd.singular_values[i] <= tol).collect();
    let mut basis = Matrix::zeros(n_cols, null.len());
    for (c, &i) in null.iter().enumerate() {
        basis.set_column(c, &v_t.row(i).transpose());
    }
    basis
}

/// Solves `m z = rhs`. LU with one step of iterative refinement; falls back to
/// an SVD least-squares solve for singular systems and rejects the result if
/// the system turns out to be inconsistent.
pub(crate) fn solve_dense(m: &Matrix, rhs: &Vector) -> Option<Vector> {
    let n = m.nrows();
    if n == 0 {
        return Some(Vector::zeros(0));
    }
    let scale = 1.0 + mat_inf_norm(m) + inf_norm(rhs);
    let lu = m.clone().lu();
    if let Some(mut z) = lu.solve(rhs) {
        if z.iter().all(|v| v.is_finite()) {
            let res = rhs - m * &z;
            if let Some(dz) = lu.solve(&res) {
                if dz.iter().all(|v| v.is_finite()) {
                    z += dz;
                }
            }
            if inf_norm(&(rhs - m * &z)) <= 1e-9 * scale * (1.0 + inf_norm(&z)) {
                return Some(z);
            }
        }
    }
    let svd = m.clone().svd(true, true);
    let eps = 1e-13 * svd.singular_values.max().max(1e-300);
    let z = svd.solve(rhs, eps).ok()?;
    if z.iter().all(|v| v.is_finite()) && inf_norm(&(rhs - m * &z)) <= 1e-8 * scale * (1.0 + inf_norm(&z)) {
        Some(z)
    } else {
        None
    }
}
