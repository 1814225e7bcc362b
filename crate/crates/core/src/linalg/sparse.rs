use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use super::DenseMatrix;
use crate::error::{Error, Result};

/// Rows above which matrix-vector products are split across the rayon pool.
/// Each row is still summed in a fixed order, so results do not depend on the
/// thread count.
const PAR_ROWS: usize = 32_768;

/// Compressed-row sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    /// Build from `(row, col, value)` triplets; duplicates are summed in input order.
    pub fn from_triplets<I>(nrows: usize, ncols: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let triplets: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        let mut count = vec![0usize; nrows + 1];
        for &(i, j, _) in &triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            count[i + 1] += 1;
        }
        for i in 0..nrows {
            count[i + 1] += count[i];
        }
        let mut next = count.clone();
        let mut bucket = vec![(0usize, 0.0f64); triplets.len()];
        for &(i, j, v) in &triplets {
            bucket[next[i]] = (j, v);
            next[i] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for i in 0..nrows {
            let row = &mut bucket[count[i]..count[i + 1]];
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let j = row[k].0;
                let mut v = 0.0;
                while k < row.len() && row[k].0 == j {
                    v += row[k].1;
                    k += 1;
                }
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
            symmetric: false,
        }
    }

    /// Wrap raw compressed-row arrays; columns must be sorted within rows.
    pub(crate) fn from_csr(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(row_ptr.len(), nrows + 1);
        debug_assert_eq!(col_idx.len(), values.len());
        debug_assert!(row_ptr
            .windows(2)
            .all(|w| col_idx[w[0]..w[1]].windows(2).all(|c| c[0] < c[1])));
        debug_assert!(col_idx.iter().all(|&j| j < ncols));
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
            symmetric: false,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)));
        m.symmetric = true;
        m
    }

    pub fn from_dense(d: &DenseMatrix) -> Self {
        let mut t = Vec::new();
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                if d[(i, j)] != 0.0 {
                    t.push((i, j, d[(i, j)]));
                }
            }
        }
        Self::from_triplets(d.nrows(), d.ncols(), t)
    }

    /// Mark the matrix as symmetric (informational; callers assert it).
    pub fn with_symmetric(mut self, symmetric: bool) -> Self {
        self.symmetric = symmetric;
        self
    }

    pub fn is_marked_symmetric(&self) -> bool {
        self.symmetric
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

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i))
            .collect()
    }

    /// `y = A x`
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.ncols,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.nrows];
        self.mul_into(x, &mut y);
        Ok(y)
    }

    #[inline]
    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            s += self.values[k] * x[self.col_idx[k]];
        }
        s
    }

    /// `y = A x` without allocation. Panics on dimension mismatch.
    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        if self.nrows >= PAR_ROWS {
            y.par_chunks_mut(4096).enumerate().for_each(|(c, chunk)| {
                let base = c * 4096;
                for (k, yi) in chunk.iter_mut().enumerate() {
                    *yi = self.row_dot(base + k, x);
                }
            });
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = self.row_dot(i, x);
            }
        }
    }

    /// `r = b - A x` without allocation.
    pub fn residual_into(&self, b: &[f64], x: &[f64], r: &mut [f64]) {
        assert_eq!(b.len(), self.nrows);
        self.mul_into(x, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut row_ptr = vec![0usize; self.ncols + 1];
        for &j in &self.col_idx {
            row_ptr[j + 1] += 1;
        }
        for j in 0..self.ncols {
            row_ptr[j + 1] += row_ptr[j];
        }
        let mut next = row_ptr.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        // rows are visited in order, so every transposed row comes out sorted
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let slot = &mut next[self.col_idx[k]];
                col_idx[*slot] = i;
                values[*slot] = self.values[k];
                *slot += 1;
            }
        }
        SparseMatrix::from_csr(self.ncols, self.nrows, row_ptr, col_idx, values)
            .with_symmetric(self.symmetric)
    }

    /// Largest `|a_ij - a_ji|` relative to the largest `|a_ij|`.
    pub fn symmetry_defect(&self) -> f64 {
        let mut max_abs = 0.0f64;
        let mut max_diff = 0.0f64;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                max_abs = max_abs.max(v.abs());
                max_diff = max_diff.max((v - self.get(j, i)).abs());
            }
        }
        if max_abs == 0.0 {
            0.0
        } else {
            max_diff / max_abs
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d[(i, j)] += v;
            }
        }
        d
    }

    /// MatrixMarket coordinate format (general, real).
    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
