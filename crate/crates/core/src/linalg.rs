//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Inverses with a 2-norm condition number above this are refused.
pub const MAX_CONDITION: f64 = 1e12;

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of a square matrix, refusing anything worse conditioned than
/// [`MAX_CONDITION`]. `what` names the matrix in the diagnostic.
pub fn checked_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} is {}x{}, not square",
            m.nrows(),
            m.ncols()
        )));
    }
    let cond = condition_number(m);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::Singular(format!("{what} has condition number {cond:e}")));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("{what} is not invertible")))
}

pub fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("{what}: ragged rows")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn vector_to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Symmetrize in place by averaging with the transpose.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let a = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
}

/// `Tᵀ · M · T` for a symmetric middle factor.
pub fn congruence(t: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = t.transpose() * m * t;
    symmetrize(&mut out);
    out
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_rejects_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(checked_inverse(&m, "m"), Err(Error::Singular(_))));
    }

    #[test]
    fn inverse_of_diag() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let inv = checked_inverse(&m, "m").unwrap();
        assert_eq!(inv[(0, 0)], 0.5);
        assert_eq!(inv[(1, 1)], 0.25);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(matrix_from_rows(&[vec![1.0], vec![1.0, 2.0]], "x").is_err());
    }
}
