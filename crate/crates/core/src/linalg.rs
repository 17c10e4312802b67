//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

/// Singular values below `RANK_RTOL * sigma_max` count as zero.
pub const RANK_RTOL: f64 = 1e-8;

/// Singular values in nondecreasing order. Empty for empty matrices.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(f64::total_cmp);
    sv
}

/// Largest singular value (0 for empty matrices).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// Smallest value of `|m x|` over unit vectors `x`.
///
/// Zero when `m` has more columns than rows (nontrivial kernel).
pub fn min_gain(m: &DMatrix<f64>) -> f64 {
    if m.ncols() > m.nrows() {
        return 0.0;
    }
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Numerical rank with relative tolerance [`RANK_RTOL`].
pub fn rank(m: &DMatrix<f64>) -> usize {
    let sv = singular_values(m);
    let max = sv.last().copied().unwrap_or(0.0);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > RANK_RTOL * max).count()
}

/// Orthonormal basis (as columns) of the column space of `m`.
pub fn column_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    let rows = m.nrows();
    if rows == 0 || m.ncols() == 0 {
        return DMatrix::zeros(rows, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return DMatrix::zeros(rows, 0);
    }
    let keep: Vec<usize> =
        svd.singular_values.iter().enumerate().filter(|(_, s)| **s > RANK_RTOL * max).map(|(i, _)| i).collect();
    DMatrix::from_fn(rows, keep.len(), |r, c| u[(r, keep[c])])
}

/// Orthonormal basis of the column space of the given (not necessarily
/// orthonormal) basis.
pub fn orthonormalize(basis: &DMatrix<f64>) -> DMatrix<f64> {
    column_space(basis)
}

/// Eigenvalues of the symmetric part of `m`, nondecreasing.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Rank of a symmetric PSD matrix via its eigenvalues, relative tolerance
/// [`RANK_RTOL`].
pub fn psd_rank(m: &DMatrix<f64>) -> usize {
    let ev = symmetric_eigenvalues(m);
    let max = ev.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return 0;
    }
    ev.iter().filter(|e| **e > RANK_RTOL * max).count()
}

/// Coordinate-selector basis: columns `e_i` for each `i` in `indices`.
pub fn coordinate_basis(dim: usize, indices: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(dim, indices.len(), |r, c| if r == indices[c] { 1.0 } else { 0.0 })
}

/// `max |a_ij - b_ij|`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn antidiagonal_singular_values() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 0.03, -0.04, 0.0]);
        let sv = singular_values(&m);
        assert!((sv[0] - 0.03).abs() < 1e-15 && (sv[1] - 0.04).abs() < 1e-15);
        assert!((min_gain(&m) - 0.03).abs() < 1e-15);
    }

    #[test]
    fn rank_and_column_space() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 0.0, 0.0]);
        assert_eq!(rank(&m), 1);
        let b = column_space(&m);
        assert_eq!(b.ncols(), 1);
        assert!(((b.transpose() * &b)[(0, 0)] - 1.0).abs() < 1e-12);
        assert_eq!(rank(&DMatrix::zeros(2, 2)), 0);
        assert_eq!(column_space(&DMatrix::zeros(2, 2)).ncols(), 0);
    }

    #[test]
    fn wide_matrix_has_zero_min_gain() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert_eq!(min_gain(&m), 0.0);
    }
}
