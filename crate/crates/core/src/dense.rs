//! Small dense matrices for the reduced-order model, backed by faer for the
//! factorizations.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{Mat, MatMut};

use crate::error::{CloakError, Result};
use crate::sparse::{dot, pin_sequential, CsrMatrix};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        DenseMatrix { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        DenseMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn transpose_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (yj, a) in y.iter_mut().zip(self.row(i)) {
                *yj += a * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `Σ cᵢ Aᵢ`.
    pub fn linear_combination(terms: &[(f64, &DenseMatrix)]) -> DenseMatrix {
        let (rows, cols) = (terms[0].1.rows, terms[0].1.cols);
        let mut out = DenseMatrix::zeros(rows, cols);
        for &(c, m) in terms {
            assert_eq!((m.rows, m.cols), (rows, cols));
            for (o, v) in out.data.iter_mut().zip(&m.data) {
                *o += c * v;
            }
        }
        out
    }

    /// Copies `block` into `self` at the given offset, scaled.
    pub fn add_block(&mut self, row: usize, col: usize, scale: f64, block: &DenseMatrix) {
        assert!(row + block.rows <= self.rows && col + block.cols <= self.cols);
        for i in 0..block.rows {
            for j in 0..block.cols {
                self.data[(row + i) * self.cols + col + j] += scale * block.get(i, j);
            }
        }
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    pub fn to_faer(&self) -> Mat<f64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }

    pub fn from_faer(m: faer::MatRef<'_, f64>) -> DenseMatrix {
        DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

/// Dense LU with partial pivoting.
pub struct DenseLu {
    n: usize,
    context: &'static str,
    lu: PartialPivLu<f64>,
}

impl std::fmt::Debug for DenseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DenseLu").field("n", &self.n).finish()
    }
}

impl DenseLu {
    pub fn new(context: &'static str, a: &DenseMatrix) -> Result<DenseLu> {
        pin_sequential();
        if a.rows != a.cols {
            return Err(CloakError::DimensionMismatch { context, expected: a.rows, actual: a.cols });
        }
        let m = a.to_faer();
        let lu = m.partial_piv_lu();
        // partial pivoting never fails; singularity shows up as a zero or
        // non-finite pivot, caught here rather than in every solve
        let u = lu.U();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..a.rows {
            let d = u[(i, i)];
            if !d.is_finite() || d.abs() <= scale * f64::EPSILON * a.rows as f64 * 1e-6 {
                return Err(CloakError::Factorization {
                    context,
                    message: format!("pivot {i} is {d:e} (matrix numerically singular)"),
                });
            }
        }
        Ok(DenseLu { n: a.rows, context, lu })
    }

    /// Explicit inverse, for small matrices applied many times.
    pub fn inverse(&self) -> Result<DenseMatrix> {
        let mut inv = DenseMatrix::zeros(self.n, self.n);
        let mut e = vec![0.0; self.n];
        for j in 0..self.n {
            e[j] = 1.0;
            let col = self.solve(&e)?;
            e[j] = 0.0;
            for (i, v) in col.into_iter().enumerate() {
                inv.set(i, j, v);
            }
        }
        Ok(inv)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(b.len(), self.n);
        let mut x = b.to_vec();
        if self.n > 0 {
            self.lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, self.n, 1));
        }
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(CloakError::Factorization {
                context: self.context,
                message: "solution contains non-finite values".into(),
            })
        }
    }
}

/// Orthonormal columns stored one vector per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    n_rows: usize,
    columns: Vec<Vec<f64>>,
}

impl Basis {
    pub fn new(n_rows: usize, columns: Vec<Vec<f64>>) -> Basis {
        assert!(columns.iter().all(|c| c.len() == n_rows));
        Basis { n_rows, columns }
    }

    pub fn empty(n_rows: usize) -> Basis {
        Basis { n_rows, columns: Vec::new() }
    }

    /// Identity basis of the full space.
    pub fn identity(n: usize) -> Basis {
        Basis::new(
            n,
            (0..n)
                .map(|i| {
                    let mut e = vec![0.0; n];
                    e[i] = 1.0;
                    e
                })
                .collect(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// `V c`.
    pub fn lift(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.columns.len());
        let mut v = vec![0.0; self.n_rows];
        for (c, col) in coeffs.iter().zip(&self.columns) {
            if *c != 0.0 {
                for (vi, x) in v.iter_mut().zip(col) {
                    *vi += c * x;
                }
            }
        }
        v
    }

    /// `Vᵀ v`.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n_rows);
        self.columns.iter().map(|c| dot(c, v)).collect()
    }

    /// `Vᵀ A W` for a sparse `A`.
    pub fn galerkin(&self, a: &CsrMatrix, right: &Basis) -> DenseMatrix {
        assert_eq!(a.nrows(), self.n_rows);
        assert_eq!(a.ncols(), right.n_rows);
        let aw: Vec<Vec<f64>> = right.columns.iter().map(|c| a.mul_vec(c)).collect();
        DenseMatrix::from_fn(self.dim(), right.dim(), |i, j| dot(&self.columns[i], &aw[j]))
    }

    /// `‖VᵀV − I‖_max`.
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..=i {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(&self.columns[i], &self.columns[j]) - target).abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_and_detects_singularity() {
        let a = DenseMatrix::from_row_major(2, 2, vec![4.0, 1.0, 2.0, 3.0]);
        let x = DenseLu::new("t", &a).unwrap().solve(&[1.0, 2.0]).unwrap();
        let r = a.mul_vec(&x);
        assert!((r[0] - 1.0).abs() < 1e-15 && (r[1] - 2.0).abs() < 1e-15);
        let s = DenseMatrix::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 4.0]);
        assert!(DenseLu::new("t", &s).is_err());
    }

    #[test]
    fn galerkin_with_identity_is_densification() {
        let a = CsrMatrix::from_triplets(3, 3, &[(0, 0, 1.0), (1, 2, 2.0), (2, 1, -1.0)]);
        let i = Basis::identity(3);
        let g = i.galerkin(&a, &i);
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(g.get(r, c), a.get(r, c));
            }
        }
    }
}
