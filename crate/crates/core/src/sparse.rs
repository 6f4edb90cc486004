//! Compressed sparse row matrices for assembly plus thin wrappers around the
//! faer sparse factorizations.

use std::sync::Once;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{MatMut, Side};

use crate::error::{CloakError, Result};

static SEQUENTIAL: Once = Once::new();

/// Solves are kept single-threaded inside faer so that results do not depend
/// on the scheduling of outer parallel loops.
pub(crate) fn pin_sequential() {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// Row-compressed sparse matrix with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    ///
    /// Explicit zeros that result from summation are kept so that the sparsity
    /// pattern reflects the mesh connectivity.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut cursor = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            let slot = cursor[r];
            cols[slot] = c;
            vals[slot] = v;
            cursor[r] += 1;
        }

        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_by_key(|&(c, _)| c);
            for &(c, v) in &scratch {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates over the stored entries of row `r` as `(col, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }

    /// `y = Aᵀ x`.
    pub fn transpose_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[k]] += self.values[k] * xr;
            }
        }
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        let mut acc = 0.0;
        for (r, &xr) in x.iter().enumerate() {
            let mut row = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row += self.values[k] * y[self.col_idx[k]];
            }
            acc += xr * row;
        }
        acc
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    pub fn transpose(&self) -> CsrMatrix {
        let trip: Vec<_> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, &trip)
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `Σ cᵢ Aᵢ` over the union of the sparsity patterns.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> CsrMatrix {
        assert!(!terms.is_empty());
        let (nrows, ncols) = (terms[0].1.nrows, terms[0].1.ncols);
        let mut trip = Vec::with_capacity(terms.iter().map(|t| t.1.nnz()).sum());
        for &(c, m) in terms {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols), "shape mismatch");
            trip.extend(m.triplets().map(|(r, col, v)| (r, col, c * v)));
        }
        CsrMatrix::from_triplets(nrows, ncols, &trip)
    }

    /// Selects rows `rows` and columns `cols` (in the given order).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (new, &old) in cols.iter().enumerate() {
            col_map[old] = new;
        }
        let mut trip = Vec::new();
        for (new_r, &old_r) in rows.iter().enumerate() {
            for (c, v) in self.row(old_r) {
                let nc = col_map[c];
                if nc != usize::MAX {
                    trip.push((new_r, nc, v));
                }
            }
        }
        CsrMatrix::from_triplets(rows.len(), cols.len(), &trip)
    }

    /// Largest absolute entrywise difference; patterns may differ.
    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        let d = CsrMatrix::linear_combination(&[(1.0, self), (-1.0, other)]);
        d.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.triplets() {
            d[r][c] += v;
        }
        d
    }

    pub fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let trip: Vec<_> = self
            .triplets()
            .map(|(r, c, v)| Triplet::new(r, c, v))
            .collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trip).map_err(|e| {
            CloakError::Factorization {
                context: "sparse conversion",
                message: format!("{e:?}"),
            }
        })
    }
}

/// Places sparse blocks into a larger matrix.
#[derive(Debug)]
pub struct BlockBuilder {
    nrows: usize,
    ncols: usize,
    triplets: Vec<(usize, usize, f64)>,
}

impl BlockBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        BlockBuilder {
            nrows,
            ncols,
            triplets: Vec::new(),
        }
    }

    pub fn add(&mut self, row_offset: usize, col_offset: usize, scale: f64, block: &CsrMatrix) {
        assert!(row_offset + block.nrows() <= self.nrows);
        assert!(col_offset + block.ncols() <= self.ncols);
        self.triplets.extend(
            block
                .triplets()
                .map(|(r, c, v)| (r + row_offset, c + col_offset, scale * v)),
        );
    }

    pub fn build(self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.nrows, self.ncols, &self.triplets)
    }
}

fn check_finite(context: &'static str, x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CloakError::Factorization {
            context,
            message: "solution contains non-finite values (numerically singular matrix)".into(),
        })
    }
}

/// Sparse LU with partial pivoting for unsymmetric systems.
pub struct SparseLu {
    n: usize,
    context: &'static str,
    lu: Lu<usize, f64>,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseLu").field("n", &self.n).finish()
    }
}

impl SparseLu {
    pub fn new(context: &'static str, a: &CsrMatrix) -> Result<Self> {
        pin_sequential();
        if a.nrows() != a.ncols() {
            return Err(CloakError::DimensionMismatch {
                context,
                expected: a.nrows(),
                actual: a.ncols(),
            });
        }
        let lu = a.to_faer()?.sp_lu().map_err(|e| CloakError::Factorization {
            context,
            message: format!("{e:?}"),
        })?;
        Ok(SparseLu {
            n: a.nrows(),
            context,
            lu,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, x: &mut [f64]) -> Result<()> {
        assert_eq!(x.len(), self.n);
        self.lu
            .solve_in_place(MatMut::from_column_major_slice_mut(x, self.n, 1));
        check_finite(self.context, x)
    }
}

/// Sparse Cholesky for symmetric positive definite systems.
pub struct SparseCholesky {
    n: usize,
    context: &'static str,
    llt: Llt<usize, f64>,
}

impl std::fmt::Debug for SparseCholesky {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseCholesky").field("n", &self.n).finish()
    }
}

impl SparseCholesky {
    pub fn new(context: &'static str, a: &CsrMatrix) -> Result<Self> {
        pin_sequential();
        if a.nrows() != a.ncols() {
            return Err(CloakError::DimensionMismatch {
                context,
                expected: a.nrows(),
                actual: a.ncols(),
            });
        }
        let llt = a
            .to_faer()?
            .sp_cholesky(Side::Lower)
            .map_err(|e| CloakError::Factorization {
                context,
                message: format!("{e:?}"),
            })?;
        Ok(SparseCholesky { n: a.nrows(), context, llt })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, x: &mut [f64]) -> Result<()> {
        assert_eq!(x.len(), self.n);
        self.llt
            .solve_in_place(MatMut::from_column_major_slice_mut(x, self.n, 1));
        check_finite(self.context, x)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += a x`
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsrMatrix {
        CsrMatrix::from_triplets(
            3,
            3,
            &[
                (0, 0, 4.0),
                (0, 1, 1.0),
                (1, 0, 1.0),
                (1, 1, 3.0),
                (2, 2, 2.0),
                (0, 0, 1.0),
                (2, 1, -1.0),
            ],
        )
    }

    #[test]
    fn duplicates_are_summed() {
        let a = sample();
        assert_eq!(a.get(0, 0), 5.0);
        assert_eq!(a.nnz(), 6);
        assert_eq!(a.get(1, 2), 0.0);
    }

    #[test]
    fn products_agree_with_dense() {
        let a = sample();
        let x = [1.0, -2.0, 0.5];
        let y = a.mul_vec(&x);
        let d = a.to_dense();
        for r in 0..3 {
            let e: f64 = (0..3).map(|c| d[r][c] * x[c]).sum();
            assert!((y[r] - e).abs() < 1e-15);
        }
        let yt = a.transpose_mul_vec(&x);
        assert_eq!(yt, a.transpose().mul_vec(&x));
        assert!((a.bilinear(&x, &x) - dot(&x, &y)).abs() < 1e-14);
    }

    #[test]
    fn submatrix_and_combination() {
        let a = sample();
        let s = a.submatrix(&[2, 0], &[0, 2]);
        assert_eq!(s.to_dense(), vec![vec![0.0, 2.0], vec![5.0, 0.0]]);
        let c = CsrMatrix::linear_combination(&[(2.0, &a), (-1.0, &CsrMatrix::identity(3))]);
        assert_eq!(c.get(0, 0), 9.0);
        assert_eq!(c.get(2, 1), -2.0);
    }

    #[test]
    fn factorizations_solve() {
        let a = sample();
        let b = [1.0, 2.0, 3.0];
        let x = SparseLu::new("test", &a).unwrap().solve(&b).unwrap();
        let r = sub(&a.mul_vec(&x), &b);
        assert!(norm(&r) < 1e-14);

        let spd = CsrMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)]);
        let x = SparseCholesky::new("test", &spd).unwrap().solve(&[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        let outcome = SparseLu::new("singular", &a).and_then(|lu| lu.solve(&[1.0, 2.0]));
        assert!(outcome.is_err());
    }
}
