//! Minimal compressed-row sparse matrices.
//!
//! Incidence operators are stored over `i64` so structural identities can be
//! checked exactly; numerical work converts to `f64`.

use std::ops::{Add, Mul, Neg};

use nalgebra::DMatrix;
use num_traits::Zero;

pub trait Scalar: Copy + PartialEq + Zero + Add<Output = Self> + Mul<Output = Self> + Neg<Output = Self> {}
impl<T> Scalar for T where T: Copy + PartialEq + Zero + Add<Output = T> + Mul<Output = T> + Neg<Output = T> {}

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    /// Duplicates are summed and explicit zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, T)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) outside {nrows}x{ncols}");
            if last == Some((r, c)) {
                let x = data.last_mut().unwrap();
                *x = *x + v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix { nrows, ncols, indptr, indices, data }.pruned()
    }

    pub fn identity(n: usize) -> Self
    where
        T: num_traits::One,
    {
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![T::one(); n],
        }
    }

    fn pruned(self) -> Self {
        if self.data.iter().all(|v| !v.is_zero()) {
            return self;
        }
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for r in 0..self.nrows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                if !self.data[p].is_zero() {
                    indices.push(self.indices[p]);
                    data.push(self.data[p]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        CsrMatrix { nrows: self.nrows, ncols: self.ncols, indptr, indices, data }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |p| (self.indices[p], self.data[p]))
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let cols = &self.indices[self.indptr[r]..self.indptr[r + 1]];
        match cols.binary_search(&c) {
            Ok(p) => self.data[self.indptr[r] + p],
            Err(_) => T::zero(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| v.is_zero())
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for i in 0..self.ncols {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut indices = vec![0usize; self.nnz()];
        let mut data = vec![T::zero(); self.nnz()];
        for r in 0..self.nrows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[p];
                indices[next[c]] = r;
                data[next[c]] = self.data[p];
                next[c] += 1;
            }
        }
        CsrMatrix { nrows: self.ncols, ncols: self.nrows, indptr: counts, indices, data }
    }

    /// Sparse product `self * rhs`.
    pub fn mul(&self, rhs: &CsrMatrix<T>) -> CsrMatrix<T> {
        assert_eq!(self.ncols, rhs.nrows, "dimension mismatch in sparse product");
        let mut acc = vec![T::zero(); rhs.ncols];
        let mut mark = vec![usize::MAX; rhs.ncols];
        let mut touched = Vec::new();
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for r in 0..self.nrows {
            touched.clear();
            for (k, a) in self.row(r) {
                for (c, b) in rhs.row(k) {
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = T::zero();
                        touched.push(c);
                    }
                    acc[c] = acc[c] + a * b;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                if !acc[c].is_zero() {
                    indices.push(c);
                    data.push(acc[c]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        CsrMatrix { nrows: self.nrows, ncols: rhs.ncols, indptr, indices, data }
    }

    pub fn add(&self, rhs: &CsrMatrix<T>) -> CsrMatrix<T> {
        assert_eq!((self.nrows, self.ncols), (rhs.nrows, rhs.ncols));
        let trip = self.triplets().chain(rhs.triplets()).collect();
        CsrMatrix::from_triplets(self.nrows, self.ncols, trip)
    }

    pub fn scaled(&self, s: T) -> CsrMatrix<T> {
        let data = self.data.iter().map(|&v| v * s).collect();
        CsrMatrix { data, ..self.clone() }.pruned()
    }

    /// Keep the listed rows and columns, in the given order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix<T> {
        let mut colmap = vec![usize::MAX; self.ncols];
        for (new, &old) in cols.iter().enumerate() {
            colmap[old] = new;
        }
        let mut trip = Vec::new();
        for (new_r, &r) in rows.iter().enumerate() {
            for (c, v) in self.row(r) {
                if colmap[c] != usize::MAX {
                    trip.push((new_r, colmap[c], v));
                }
            }
        }
        CsrMatrix::from_triplets(rows.len(), cols.len(), trip)
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> CsrMatrix<U> {
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
        .pruned()
    }
}

impl CsrMatrix<i64> {
    pub fn max_abs(&self) -> i64 {
        self.data.iter().map(|v| v.abs()).max().unwrap_or(0)
    }

    pub fn to_f64(&self) -> CsrMatrix<f64> {
        self.map(|v| v as f64)
    }
}

impl CsrMatrix<f64> {
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `selfᵀ x` without forming the transpose.
    pub fn tmatvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            if xr != 0.0 {
                for (c, v) in self.row(r) {
                    y[c] += v * xr;
                }
            }
        }
        y
    }

    /// `diag(left) * self * diag(right)`.
    pub fn scale_rows_cols(&self, left: Option<&[f64]>, right: Option<&[f64]>) -> CsrMatrix<f64> {
        let mut out = self.clone();
        for r in 0..self.nrows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                let mut v = self.data[p];
                if let Some(l) = left {
                    v *= l[r];
                }
                if let Some(rt) = right {
                    v *= rt[self.indices[p]];
                }
                out.data[p] = v;
            }
        }
        out
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: d.to_vec(),
        }
        .pruned()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn mdot(a: &[f64], m: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(m).zip(b).map(|((x, w), y)| x * w * y).sum()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
