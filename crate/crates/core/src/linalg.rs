//! Dense least squares and rank via SVD.

use nalgebra::{DMatrix, DVector};

use crate::autodiff::Matrix;
use crate::error::{Error, Result};

/// Relative singular-value cutoff for rank decisions.
pub const RANK_TOLERANCE: f64 = 1e-8;

fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

/// Minimum-norm least-squares solution of `a · w ≈ b`.
pub fn least_squares(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if a.rows() != b.len() {
        return Err(Error::Shape {
            op: "least_squares",
            left: format!("{}x{}", a.rows(), a.cols()),
            right: format!("{} targets", b.len()),
        });
    }
    if a.rows() == 0 || a.cols() == 0 {
        return Ok(vec![0.0; a.cols()]);
    }
    let svd = to_dmatrix(a).svd(true, true);
    let top = svd.singular_values.max();
    let eps = (top * RANK_TOLERANCE).max(f64::MIN_POSITIVE);
    let w = svd
        .solve(&DVector::from_column_slice(b), eps)
        .map_err(|e| Error::Numeric(format!("least squares failed: {e}")))?;
    Ok(w.as_slice().to_vec())
}

/// Ordinary least squares of `y` on `[x | 1]`; returns (coefficients, intercept).
pub fn ols_with_intercept(x: &Matrix, y: &[f64]) -> Result<(Vec<f64>, f64)> {
    let ones = Matrix::filled(x.rows(), 1, 1.0);
    let design = Matrix::concat_cols(&[x, &ones])?;
    let mut w = least_squares(&design, y)?;
    let b = w.pop().unwrap_or(0.0);
    Ok((w, b))
}

/// Singular values in decreasing order.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    if a.rows() == 0 || a.cols() == 0 {
        return Vec::new();
    }
    let mut s = to_dmatrix(a).singular_values().as_slice().to_vec();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Count of singular values above `RANK_TOLERANCE` times the largest.
pub fn numerical_rank(a: &Matrix) -> usize {
    let s = singular_values(a);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v > RANK_TOLERANCE * top).count(),
        _ => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit_recovered() {
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![2.0, -1.0]]).unwrap();
        let y: Vec<f64> = (0..4).map(|i| 3.0 * x.get(i, 0) - 2.0 * x.get(i, 1) + 0.5).collect();
        let (w, b) = ols_with_intercept(&x, &y).unwrap();
        assert!((w[0] - 3.0).abs() < 1e-12 && (w[1] + 2.0).abs() < 1e-12 && (b - 0.5).abs() < 1e-12);
    }

    #[test]
    fn underdetermined_is_minimum_norm() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let w = least_squares(&a, &[2.0]).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-12 && (w[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_of_simple_matrices() {
        assert_eq!(numerical_rank(&Matrix::identity(3)), 3);
        assert_eq!(numerical_rank(&Matrix::zeros(2, 2)), 0);
        let r = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        assert_eq!(numerical_rank(&r), 1);
    }
}
