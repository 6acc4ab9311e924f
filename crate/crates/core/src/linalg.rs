//! Sparse storage and the direct solvers shared by the high-fidelity and energy modules.

use faer::linalg::solvers::SolveCore;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, MatMut};
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut data = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &sorted {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds");
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Csr { nrows, ncols, indptr, indices, data }
    }

    /// Pattern-only constructor: every listed position is stored with value zero.
    pub fn pattern(nrows: usize, ncols: usize, positions: &[(usize, usize)]) -> Self {
        let t: Vec<(usize, usize, f64)> = positions.iter().map(|&(r, c)| (r, c, 0.0)).collect();
        Self::from_triplets(nrows, ncols, &t)
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// Slot index of entry `(r, c)` if it is part of the pattern.
    pub fn slot(&self, r: usize, c: usize) -> Option<usize> {
        let row = &self.indices[self.indptr[r]..self.indptr[r + 1]];
        row.binary_search(&c).ok().map(|k| self.indptr[r] + k)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.slot(r, c).map_or(0.0, |k| self.data[k])
    }

    /// Same pattern, new values.
    pub fn with_values(&self, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), self.nnz());
        Csr { data, ..self.clone() }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |k| (self.indices[k], self.data[k]))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        for (r, yr) in y.iter_mut().enumerate().take(self.nrows) {
            let mut s = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.data[k] * x[self.indices[k]];
            }
            *yr = s;
        }
    }

    /// `y = Aᵀ x`.
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            for k in self.indptr[r]..self.indptr[r + 1] {
                y[self.indices[k]] += self.data[k] * xr;
            }
        }
        y
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                out.push((r, c, v));
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<(usize, usize, f64)> = self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    /// `(A + Aᵀ)/2`.
    pub fn sym_part(&self) -> Self {
        let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * self.nnz());
        for (r, c, v) in self.triplets() {
            t.push((r, c, 0.5 * v));
            t.push((c, r, 0.5 * v));
        }
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    /// `a·self + b·other`, patterns merged.
    pub fn lin_comb(&self, a: f64, other: &Csr, b: f64) -> Self {
        let mut t: Vec<(usize, usize, f64)> = self.triplets().into_iter().map(|(r, c, v)| (r, c, a * v)).collect();
        t.extend(other.triplets().into_iter().map(|(r, c, v)| (r, c, b * v)));
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    /// Adds `diag` to the diagonal (the pattern grows if needed).
    pub fn add_diag(&self, diag: &[f64]) -> Self {
        let mut t = self.triplets();
        t.extend(diag.iter().enumerate().map(|(i, &d)| (i, i, d)));
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            d[(r, c)] += v;
        }
        d
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let t: Vec<Triplet<usize, usize, f64>> =
            self.triplets().into_iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| Error::Assembly(format!("sparse conversion failed: {e:?}")))
    }
}

/// Sparse LU factorization with partial pivoting, reusable for many right-hand sides.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl SparseLu {
    pub fn new(a: &Csr) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::Dimension { expected: a.nrows, got: a.ncols });
        }
        let lu = a
            .to_faer()?
            .sp_lu()
            .map_err(|e| Error::Solver { step: 0, msg: format!("sparse LU failed: {e:?}") })?;
        Ok(SparseLu { n: a.nrows, lu })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        assert_eq!(rhs.len(), self.n);
        let view = MatMut::from_column_major_slice_mut(rhs, self.n, 1);
        self.lu.solve_in_place_with_conj(Conj::No, view);
    }

    pub fn solve_transpose_in_place(&self, rhs: &mut [f64]) {
        assert_eq!(rhs.len(), self.n);
        let view = MatMut::from_column_major_slice_mut(rhs, self.n, 1);
        self.lu.solve_transpose_in_place_with_conj(Conj::No, view);
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solves for every column of `rhs`.
    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(rhs.nrows(), self.n);
        let mut x = rhs.clone();
        let ncols = x.ncols();
        if ncols > 0 {
            let view = MatMut::from_column_major_slice_mut(x.as_mut_slice(), self.n, ncols);
            self.lu.solve_in_place_with_conj(Conj::No, view);
        }
        x
    }
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
pub struct SparseCholesky {
    n: usize,
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
}

impl SparseCholesky {
    pub fn new(a: &Csr) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::Dimension { expected: a.nrows, got: a.ncols });
        }
        let llt = a
            .to_faer()?
            .sp_cholesky(faer::Side::Lower)
            .map_err(|e| Error::Model(format!("matrix is not positive definite: {e:?}")))?;
        Ok(SparseCholesky { n: a.nrows, llt })
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        assert_eq!(rhs.len(), self.n);
        let view = MatMut::from_column_major_slice_mut(rhs, self.n, 1);
        self.llt.solve_in_place_with_conj(Conj::No, view);
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(rhs.nrows(), self.n);
        let mut x = rhs.clone();
        let ncols = x.ncols();
        if ncols > 0 {
            let view = MatMut::from_column_major_slice_mut(x.as_mut_slice(), self.n, ncols);
            self.llt.solve_in_place_with_conj(Conj::No, view);
        }
        x
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// `y += a·x`.
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Smallest eigenvalue and eigenvector of a symmetric dense matrix.
pub fn sym_min_eigenpair(c: DMatrix<f64>) -> Result<(f64, nalgebra::DVector<f64>)> {
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite matrix entry".into()));
    }
    let eig = nalgebra::SymmetricEigen::new(c);
    let (k, &lam) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .ok_or_else(|| Error::Eigen("empty matrix".into()))?;
    Ok((lam, eig.eigenvectors.column(k).into_owned()))
}

pub fn sym_eigen_range(c: DMatrix<f64>) -> Result<(f64, f64)> {
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite matrix entry".into()));
    }
    let ev = c.symmetric_eigenvalues();
    let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let a = Csr::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, -1.0)]);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(1, 0), -1.0);
        assert_eq!(a.get(1, 1), 0.0);
    }

    #[test]
    fn lu_solves_and_transposes() {
        let a = Csr::from_triplets(2, 2, &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 2.0), (1, 1, 3.0)]);
        let lu = SparseLu::new(&a).unwrap();
        let x = lu.solve(&[1.0, 2.0]);
        assert!((x[0] - 0.1).abs() < 1e-15 && (x[1] - 0.6).abs() < 1e-15);
        let mut y = vec![1.0, 2.0];
        lu.solve_transpose_in_place(&mut y);
        assert!((y[0] + 0.1).abs() < 1e-15 && (y[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn sym_part_and_transpose() {
        let a = Csr::from_triplets(2, 2, &[(0, 1, 2.0), (1, 1, 1.0)]);
        let s = a.sym_part();
        assert_eq!(s.get(0, 1), 1.0);
        assert_eq!(s.get(1, 0), 1.0);
        assert_eq!(a.transpose().get(1, 0), 2.0);
        assert_eq!(a.matvec_t(&[1.0, 1.0]), vec![0.0, 3.0]);
    }
}
