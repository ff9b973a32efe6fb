//! Dense symmetric linear algebra.
//!
//! Storage and general products come from `nalgebra`; the symmetric
//! eigensolver is a cyclic Jacobi sweep, which is exact enough for the
//! block sizes that show up in the LMI programs (well under 20).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real symmetric matrix. Symmetrized on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Build from an arbitrary square matrix by taking `(M + Mᵀ)/2`.
    pub fn new(m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "SymMatrix requires a square matrix");
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn from_row_slice(n: usize, data: &[f64]) -> Self {
        Self::new(DMatrix::from_row_slice(n, n, data))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn scale(&self, s: f64) -> Self {
        SymMatrix(&self.0 * s)
    }

    pub fn max_eig(&self) -> Result<f64> {
        Ok(*eig_sym(self)?.values.last().expect("dim >= 1"))
    }

    pub fn min_eig(&self) -> Result<f64> {
        Ok(eig_sym(self)?.values[0])
    }

    /// Inverse through the eigendecomposition. Fails on singular input.
    pub fn inverse(&self) -> Result<SymMatrix> {
        let e = eig_sym(self)?;
        let scale = e
            .values
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()))
            .max(1e-300);
        if e.values.iter().any(|v| v.abs() <= 1e-14 * scale) {
            return Err(Error::NumericalFailure("singular symmetric matrix".into()));
        }
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for (k, &lam) in e.values.iter().enumerate() {
            let v = e.vectors.column(k);
            out += (v * v.transpose()) / lam;
        }
        Ok(SymMatrix::new(out))
    }
}

impl From<DMatrix<f64>> for SymMatrix {
    fn from(m: DMatrix<f64>) -> Self {
        SymMatrix::new(m)
    }
}

/// Result of a symmetric eigendecomposition: ascending eigenvalues and the
/// matching orthonormal eigenvectors stored as columns.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&self.values));
        &self.vectors * d * self.vectors.transpose()
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn eig_sym(m: &SymMatrix) -> Result<SymEigen> {
    let n = m.dim();
    if n == 0 {
        return Err(Error::InvalidModel(
            "eigendecomposition of an empty matrix".into(),
        ));
    }
    for r in 0..n {
        for c in 0..n {
            if !m.0[(r, c)].is_finite() {
                return Err(Error::NonFinite { row: r, col: c });
            }
        }
    }
    let mut a = m.0.clone();
    let mut v = DMatrix::<f64>::identity(n, n);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        let mut total = 0.0;
        for r in 0..n {
            for c in 0..n {
                let x = a[(r, c)] * a[(r, c)];
                total += x;
                if r != c {
                    off += x;
                }
            }
        }
        if off <= 1e-30 * total.max(1e-300) || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    Ok(SymEigen { values, vectors })
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn lambda_max(m: &DMatrix<f64>) -> Result<f64> {
    SymMatrix::new(m.clone()).max_eig()
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn lambda_min(m: &DMatrix<f64>) -> Result<f64> {
    SymMatrix::new(m.clone()).min_eig()
}

/// Largest absolute entry (0 for an empty matrix).
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Assemble a dense matrix from a grid of blocks. Row heights come from the
/// first block of each row and column widths from the first row.
pub fn block_matrix(blocks: &[Vec<DMatrix<f64>>]) -> DMatrix<f64> {
    let heights: Vec<usize> = blocks.iter().map(|row| row[0].nrows()).collect();
    let widths: Vec<usize> = blocks[0].iter().map(|b| b.ncols()).collect();
    let mut out = DMatrix::zeros(heights.iter().sum(), widths.iter().sum());
    let mut r0 = 0;
    for (bi, row) in blocks.iter().enumerate() {
        let mut c0 = 0;
        for (bj, b) in row.iter().enumerate() {
            assert_eq!(b.nrows(), heights[bi], "block row height mismatch");
            assert_eq!(b.ncols(), widths[bj], "block column width mismatch");
            out.view_mut((r0, c0), (b.nrows(), b.ncols())).copy_from(b);
            c0 += widths[bj];
        }
        r0 += heights[bi];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_eigenvalues() {
        let e = eig_sym(&SymMatrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn two_by_two_pair() {
        let e = eig_sym(&SymMatrix::from_row_slice(2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        assert_relative_eq!(e.values[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(e.values[1], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_nan() {
        let m = SymMatrix::from_row_slice(2, &[1.0, f64::NAN, f64::NAN, 1.0]);
        assert!(matches!(eig_sym(&m), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn inverse_roundtrip() {
        let m = SymMatrix::from_row_slice(2, &[4.0, 1.0, 1.0, 3.0]);
        let inv = m.inverse().unwrap();
        let prod = m.as_matrix() * inv.as_matrix();
        assert!((prod - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn block_assembly() {
        let a = DMatrix::from_element(1, 1, 1.0);
        let b = DMatrix::from_row_slice(1, 2, &[2.0, 3.0]);
        let c = DMatrix::from_row_slice(2, 1, &[4.0, 5.0]);
        let d = DMatrix::from_element(2, 2, 6.0);
        let m = block_matrix(&[vec![a, b], vec![c, d]]);
        assert_eq!(m.shape(), (3, 3));
        assert_eq!(m[(0, 2)], 3.0);
        assert_eq!(m[(2, 0)], 5.0);
        assert_eq!(m[(2, 2)], 6.0);
    }
}
