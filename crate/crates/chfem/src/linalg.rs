//! Deterministic sparse matrices and direct solvers.
//!
//! Assembly produces triplets in a fixed element order; [`SparseOperator`]
//! compresses them to CSR with a stable per-row sort, so duplicate entries are
//! summed in their encounter order and the result is bit-reproducible.
//! Factorizations are delegated to faer's sparse Cholesky (SPD operators:
//! mass, H¹ Gram) and sparse LU (the nonsymmetric Newton block system); the
//! crate builds faer without its parallel feature, keeping solves serial and
//! deterministic.

use faer::mat::Mat;
use faer::prelude::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Side;

use crate::error::{Error, Result};

/// Compressed sparse row matrix with deterministic construction.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    /// Row count.
    pub nrows: usize,
    /// Column count.
    pub ncols: usize,
    /// CSR row pointers (`nrows + 1` entries).
    pub row_ptr: Vec<usize>,
    /// Column indices, ascending within each row.
    pub col_idx: Vec<usize>,
    /// Entry values.
    pub values: Vec<f64>,
}

impl SparseOperator {
    /// Build from triplets. Duplicates are summed; the per-row stable sort
    /// keeps the summation order equal to the triplet order, so repeated
    /// assembly yields bitwise-identical values.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> SparseOperator {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for (r, c, v) in triplets {
            debug_assert!(r < nrows && c < ncols);
            rows[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(c, _)| c); // stable: ties stay in push order
            let mut iter = row.iter().peekable();
            while let Some(&&(c, v)) = iter.peek() {
                iter.next();
                let mut sum = v;
                while let Some(&&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    sum += v2;
                    iter.next();
                }
                col_idx.push(c);
                values.push(sum);
            }
            row_ptr.push(col_idx.len());
        }
        SparseOperator {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
        y
    }

    /// `xᵀ A y` (quadratic/bilinear form).
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nrows);
        let ay = self.matvec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    /// Row sums (`A·1`), used by conservation diagnostics.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows)
            .map(|r| self.values[self.row_ptr[r]..self.row_ptr[r + 1]].iter().sum())
            .collect()
    }

    /// Largest absolute asymmetry `max |a_ij − a_ji|` (test diagnostic).
    pub fn symmetry_defect(&self) -> f64 {
        assert_eq!(self.nrows, self.ncols);
        let mut defect = 0.0f64;
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                let mirror = self.get(c, r);
                defect = defect.max((self.values[k] - mirror).abs());
            }
        }
        defect
    }

    /// Entry accessor (binary search within the row; zero if absent).
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        match self.col_idx[lo..hi].binary_search(&c) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    /// Linear combination `ca·A + cb·B` on the union pattern.
    pub fn linear_combination(&self, ca: f64, other: &SparseOperator, cb: f64) -> SparseOperator {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut triplets = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                triplets.push((r, self.col_idx[k], ca * self.values[k]));
            }
            for k in other.row_ptr[r]..other.row_ptr[r + 1] {
                triplets.push((r, other.col_idx[k], cb * other.values[k]));
            }
        }
        SparseOperator::from_triplets(self.nrows, self.ncols, triplets)
    }

    /// Append this operator's entries as triplets at a block offset, scaled.
    pub fn push_block_triplets(
        &self,
        row_offset: usize,
        col_offset: usize,
        scale: f64,
        out: &mut Vec<(usize, usize, f64)>,
    ) {
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.push((r + row_offset, self.col_idx[k] + col_offset, scale * self.values[k]));
            }
        }
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let triplets: Vec<Triplet<usize, usize, f64>> = (0..self.nrows)
            .flat_map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(move |k| Triplet::new(r, self.col_idx[k], self.values[k]))
            })
            .collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &triplets)
            .map_err(|e| Error::LinearSolveFailed(format!("building sparse matrix: {e:?}")))
    }
}

fn to_mat(rhs: &[f64]) -> Mat<f64> {
    Mat::from_fn(rhs.len(), 1, |i, _| rhs[i])
}

fn from_mat(m: &Mat<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

/// Cached sparse Cholesky factorization of an SPD operator.
pub struct SpdSolver {
    llt: Llt<usize, f64>,
    dim: usize,
}

impl SpdSolver {
    /// Factor an SPD operator (mass matrix, H¹ Gram).
    pub fn new(op: &SparseOperator) -> Result<SpdSolver> {
        assert_eq!(op.nrows, op.ncols);
        let mat = op.to_faer()?;
        let llt = mat
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::LinearSolveFailed(format!("sparse Cholesky: {e:?}")))?;
        Ok(SpdSolver {
            llt,
            dim: op.nrows,
        })
    }

    /// Solve `A x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.dim);
        from_mat(&self.llt.solve(&to_mat(rhs)))
    }
}

/// Cached sparse LU factorization of a (generally nonsymmetric) operator.
pub struct LuSolver {
    lu: Lu<usize, f64>,
    dim: usize,
}

impl LuSolver {
    /// Factor a square operator with partial pivoting.
    pub fn new(op: &SparseOperator) -> Result<LuSolver> {
        assert_eq!(op.nrows, op.ncols);
        let mat = op.to_faer()?;
        let lu = mat
            .sp_lu()
            .map_err(|e| Error::LinearSolveFailed(format!("sparse LU: {e:?}")))?;
        Ok(LuSolver { lu, dim: op.nrows })
    }

    /// Solve `A x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.dim);
        from_mat(&self.lu.solve(&to_mat(rhs)))
    }
}
