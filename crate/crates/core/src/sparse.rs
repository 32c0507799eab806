//! Compressed sparse row storage.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Rectangular CSR matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed in input order.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        // Stable sort keeps accumulation order fixed for repeated builds.
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            debug_assert!(i < nrows && j < ncols);
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y = Aᵀ x`.
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                y[j] += v * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let trip = (0..self.nrows).flat_map(|i| self.row(i).map(move |(j, v)| (j, i, v))).collect();
        Self::from_triplets(self.ncols, self.nrows, trip)
    }

    /// Sparse product `self * rhs` (Gustavson, dense accumulator).
    pub fn matmul(&self, rhs: &CsrMatrix) -> Result<CsrMatrix> {
        if self.ncols != rhs.nrows {
            return Err(Error::Dimension { expected: self.ncols, found: rhs.nrows });
        }
        let mut acc = vec![0.0; rhs.ncols];
        let mut mark = vec![usize::MAX; rhs.ncols];
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut pattern = Vec::new();
        for i in 0..self.nrows {
            pattern.clear();
            for (k, a) in self.row(i) {
                for (j, b) in rhs.row(k) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        pattern.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            pattern.sort_unstable();
            for &j in &pattern {
                col_idx.push(j);
                values.push(acc[j]);
            }
            row_ptr[i + 1] = col_idx.len();
        }
        Ok(CsrMatrix { nrows: self.nrows, ncols: rhs.ncols, row_ptr, col_idx, values })
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest entrywise difference over the union of both patterns.
    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - other.get(i, j)).abs());
            }
            for (j, v) in other.row(i) {
                worst = worst.max((v - self.get(i, j)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d[(i, j)] += v;
            }
        }
        d
    }
}

/// Symmetric matrix stored with both triangles in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    csr: CsrMatrix,
}

impl SparseSymMatrix {
    /// Wraps a square CSR matrix after checking numerical symmetry to `1e-13` relative.
    pub fn new(csr: CsrMatrix) -> Result<Self> {
        if csr.nrows != csr.ncols {
            return Err(Error::Dimension { expected: csr.nrows, found: csr.ncols });
        }
        let m = Self { csr };
        let asym = m.asymmetry();
        let scale = m.csr.max_abs().max(f64::MIN_POSITIVE);
        if asym > 1e-13 * scale {
            return Err(Error::Config(format!("matrix not symmetric: {asym:e}")));
        }
        Ok(m)
    }

    pub fn from_triplets(n: usize, triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        Self::new(CsrMatrix::from_triplets(n, n, triplets))
    }

    pub fn dim(&self) -> usize {
        self.csr.nrows
    }

    pub fn csr(&self) -> &CsrMatrix {
        &self.csr
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.csr.row_ptr
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.csr.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.csr.values
    }

    pub fn is_symmetric(&self) -> bool {
        self.asymmetry() <= 1e-13 * self.csr.max_abs()
    }

    /// `max |a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim() {
            for (j, v) in self.csr.row(i) {
                worst = worst.max((v - self.csr.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.csr.get(i, j)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.csr.matvec(x)
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        self.csr.matvec_into(x, y)
    }

    pub fn quad_form(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { csr: self.csr.scaled(c) }
    }

    /// Principal submatrix on `indices` (which must be sorted and unique).
    pub fn principal_submatrix(&self, indices: &[usize]) -> Self {
        let mut local = vec![usize::MAX; self.dim()];
        for (k, &g) in indices.iter().enumerate() {
            local[g] = k;
        }
        let mut trip = Vec::new();
        for (k, &g) in indices.iter().enumerate() {
            for (j, v) in self.csr.row(g) {
                if local[j] != usize::MAX {
                    trip.push((k, local[j], v));
                }
            }
        }
        Self { csr: CsrMatrix::from_triplets(indices.len(), indices.len(), trip) }
    }

    /// `Pᵀ A P` for a rectangular `P`.
    pub fn galerkin(&self, p: &CsrMatrix) -> Result<Self> {
        let ap = self.csr.matmul(p)?;
        let ptap = p.transpose().matmul(&ap)?;
        Ok(Self { csr: ptap })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.csr.to_dense()
    }

    /// Writes the lower triangle as `i j value` lines (0-based).
    pub fn write_coordinate<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for i in 0..self.dim() {
            for (j, v) in self.csr.row(i).filter(|&(j, _)| j <= i) {
                writeln!(w, "{i} {j} {v:.17e}")?;
            }
        }
        Ok(())
    }
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}
