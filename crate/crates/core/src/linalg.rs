//! Shared dense linear-algebra plumbing.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative singular-value cutoff for pseudo-inverses.
pub const PINV_CUTOFF_REL: f64 = 1e-12;

/// Condition-number ceiling for maps that must be inverted.
pub const COND_MAX: f64 = 1e12;

/// SVD-based Moore-Penrose pseudo-inverse with a cutoff relative to the
/// largest singular value.
pub fn pinv(a: &DMatrix<f64>, rel_cutoff: f64) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    if !(sigma_max > 0.0) {
        return DMatrix::zeros(a.ncols(), a.nrows());
    }
    let cutoff = rel_cutoff * sigma_max;
    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let k = svd.singular_values.len();
    let mut inv_sigma = DMatrix::zeros(k, k);
    for i in 0..k {
        let s = svd.singular_values[i];
        if s > cutoff {
            inv_sigma[(i, i)] = 1.0 / s;
        }
    }
    v_t.transpose() * inv_sigma * u.transpose()
}

/// Ratio of the largest to the smallest singular value.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let svd = a.clone().svd(false, false);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Smallest eigenvalue of a symmetric matrix (symmetrized before the solve).
pub fn smallest_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = 0.5 * (a + a.transpose());
    let eig = sym.symmetric_eigen();
    eig.eigenvalues.min()
}

/// Invert a square matrix after checking its condition number against
/// [`COND_MAX`].
pub fn checked_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::domain(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let cond = condition_number(a);
    if !(cond <= COND_MAX) {
        return Err(Error::numerical(format!(
            "matrix condition number {cond:.3e} exceeds {COND_MAX:.1e}; treating as singular"
        )));
    }
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::numerical("matrix inversion failed"))
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Factor of a positive *semi*definite matrix with diagonal pivoting:
/// returns `F` with `F F^T = A` up to roundoff. The elimination always takes
/// the largest remaining diagonal entry and stops once it drops below
/// `max(rel_tol, n eps) * max_diagonal`, so rank-deficient inputs keep their
/// exact linear dependencies in the factor. Errors when a remaining diagonal
/// is negative beyond the tolerance.
pub fn psd_cholesky(a: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::domain(format!(
            "expected a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0_f64, f64::max).max(0.0);
    let tol = max_diag.max(1.0) * rel_tol.max(n as f64 * f64::EPSILON);
    let mut work = a.clone();
    let mut factor = DMatrix::zeros(n, n);
    let mut remaining: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (pos, &pivot_idx) = match remaining
            .iter()
            .enumerate()
            .max_by(|a, b| work[(*a.1, *a.1)].partial_cmp(&work[(*b.1, *b.1)]).unwrap())
        {
            Some(best) => best,
            None => break,
        };
        let pivot = work[(pivot_idx, pivot_idx)];
        if pivot <= tol {
            let worst = remaining
                .iter()
                .map(|&i| work[(i, i)])
                .fold(f64::INFINITY, f64::min);
            if worst < -10.0 * tol {
                return Err(Error::numerical(format!(
                    "matrix is not positive semidefinite: diagonal reaches {worst:.6e} \
                     (tolerance {tol:.3e})"
                )));
            }
            break; // remaining mass is numerically zero
        }
        remaining.swap_remove(pos);
        let root = pivot.sqrt();
        factor[(pivot_idx, k)] = root;
        for &j in &remaining {
            factor[(j, k)] = work[(j, pivot_idx)] / root;
        }
        for &j in &remaining {
            let fj = factor[(j, k)];
            if fj != 0.0 {
                for &i in &remaining {
                    work[(i, j)] -= factor[(i, k)] * fj;
                }
            }
        }
    }
    Ok(factor)
}

/// Maximum absolute row sum: the operator norm for maps between grid
/// functions under the sup norm.
pub fn row_sum_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.nrows())
        .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_inverts_invertible_matrices() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.0]);
        let p = pinv(&a, PINV_CUTOFF_REL);
        let id = &a * &p;
        assert!(max_abs_diff(&id, &DMatrix::identity(2, 2)) < 1e-12);
    }

    #[test]
    fn pinv_drops_null_directions() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let p = pinv(&a, PINV_CUTOFF_REL);
        assert!(max_abs_diff(&p, &a) < 1e-14);
    }

    #[test]
    fn checked_inverse_rejects_singular_maps() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(checked_inverse(&a), Err(Error::Numerical(_))));
    }

    #[test]
    fn row_sum_norm_of_identity_is_one() {
        assert_eq!(row_sum_norm(&DMatrix::identity(5, 5)), 1.0);
    }

    #[test]
    fn psd_factor_reproduces_rank_deficient_matrices() {
        // rank-2 PSD matrix with an exactly repeated coordinate
        let b = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 0.0, 0.5, 1.5, 0.0, 2.0]);
        let a = &b * b.transpose();
        let f = psd_cholesky(&a, 1e-12).unwrap();
        assert!(max_abs_diff(&(&f * f.transpose()), &a) < 1e-12);
        // the repeated coordinate keeps identical factor rows
        for k in 0..4 {
            assert_eq!(f[(0, k)], f[(1, k)]);
        }
    }

    #[test]
    fn psd_factor_rejects_indefinite_matrices() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(psd_cholesky(&a, 1e-12), Err(Error::Numerical(_))));
    }
}
