//! Dense and sparse matrix containers.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Symmetric matrix in full row-major storage; writes go to both triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseSymMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseSymMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds from `f(i, j)` evaluated for `i ≤ j` only.
    pub fn from_upper_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Takes a full row-major buffer, rejecting asymmetric input.
    pub fn from_row_major(n: usize, data: Vec<f64>, tol: f64) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: data.len() });
        }
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                worst = worst.max((data[i * n + j] - data[j * n + i]).abs());
            }
        }
        if worst > tol {
            return Err(Error::NotSymmetric(worst));
        }
        let mut m = DenseSymMatrix { n, data };
        m.symmetrize();
        Ok(m)
    }

    pub fn from_nalgebra(m: &DMatrix<f64>, tol: f64) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        let n = m.nrows();
        let data = (0..n * n).map(|k| m[(k / n, k % n)]).collect();
        Self::from_row_major(n, data, tol)
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Averages the two triangles so that `A = Aᵀ` holds bit-exactly.
    pub fn symmetrize(&mut self) {
        let n = self.n;
        for i in 0..n {
            for j in i + 1..n {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = v;
                self.data[j * n + i] = v;
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.data.par_chunks(self.n).map(|row| crate::util::dot(row, x)).collect()
    }

    /// `D A D` for a diagonal `D = diag(d)`.
    pub fn scaled(&self, d: &[f64]) -> DenseSymMatrix {
        let n = self.n;
        let mut out = self.clone();
        for i in 0..n {
            for j in 0..n {
                out.data[i * n + j] *= d[i] * d[j];
            }
        }
        out
    }

    pub fn sub(&self, other: &DenseSymMatrix) -> Result<DenseSymMatrix> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: other.n });
        }
        Ok(DenseSymMatrix { n: self.n, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() })
    }

    /// Leading principal `m × m` block.
    pub fn leading_block(&self, m: usize) -> DenseSymMatrix {
        let mut out = Self::zeros(m);
        for i in 0..m {
            out.data[i * m..(i + 1) * m].copy_from_slice(&self.data[i * self.n..i * self.n + m]);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Structurally symmetric sparse matrix in CSR form with both triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    /// Builds from `(i, j, v)` triplets with `i ≤ j`; duplicates are summed.
    pub fn from_upper_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut full = Vec::with_capacity(2 * triplets.len());
        for &(i, j, v) in &triplets {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch { expected: n, got: i.max(j) + 1 });
            }
            if i > j {
                return Err(Error::InvalidParameter(format!("triplet ({i},{j}) below the diagonal")));
            }
            if i != j {
                full.push((j, i, v));
            }
        }
        triplets.append(&mut full);
        Ok(Self::from_full_triplets(n, triplets))
    }

    fn from_full_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((i, j));
            row_ptr[i + 1] += 1;
            cols.push(j);
            values.push(v);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseSymMatrix { n, row_ptr, cols, values }
    }

    /// Keeps the entries of `dense` for which `keep(i, j)` holds (evaluated on `i ≤ j`).
    pub fn from_dense_filtered(dense: &DenseSymMatrix, keep: impl Fn(usize, usize) -> bool + Sync) -> Self {
        let n = dense.dim();
        let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut c = Vec::new();
                let mut v = Vec::new();
                for j in 0..n {
                    let (a, b) = if i <= j { (i, j) } else { (j, i) };
                    if keep(a, b) {
                        c.push(j);
                        v.push(dense.get(i, j));
                    }
                }
                (c, v)
            })
            .collect();
        Self::from_rows(n, rows)
    }

    fn from_rows(n: usize, rows: Vec<(Vec<usize>, Vec<f64>)>) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let nnz: usize = rows.iter().map(|r| r.0.len()).sum();
        let mut cols = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for (c, v) in rows {
            cols.extend(c);
            values.extend(v);
            row_ptr.push(cols.len());
        }
        SparseSymMatrix { n, row_ptr, cols, values }
    }

    pub fn from_dense(dense: &DenseSymMatrix) -> Self {
        Self::from_dense_filtered(dense, |_, _| true)
    }

    pub fn diagonal_matrix(d: &[f64]) -> Self {
        Self::from_full_triplets(d.len(), d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries (both triangles).
    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        match c.binary_search(&j) {
            Ok(pos) => v[pos],
            Err(_) => 0.0,
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.row(i).0.binary_search(&j).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &x)| (i, j, x))
        })
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            *yi = self.cols[r.clone()].iter().zip(&self.values[r]).map(|(&j, &v)| v * x[j]).sum();
        });
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    /// In-place `D A D` with `D = diag(d)`.
    pub fn scale_symmetric(&mut self, d: &[f64]) {
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                self.values[k] *= d[i] * d[self.cols[k]];
            }
        }
    }

    /// Drops stored entries for which `drop(i, j, v)` holds; the predicate is
    /// evaluated on `i ≤ j` so the result stays structurally symmetric.
    pub fn retain(&self, keep: impl Fn(usize, usize, f64) -> bool + Sync) -> SparseSymMatrix {
        let rows = (0..self.n)
            .into_par_iter()
            .map(|i| {
                let (c, v) = self.row(i);
                let mut cc = Vec::new();
                let mut vv = Vec::new();
                for (&j, &x) in c.iter().zip(v) {
                    let (a, b) = if i <= j { (i, j) } else { (j, i) };
                    if keep(a, b, x) {
                        cc.push(j);
                        vv.push(x);
                    }
                }
                (cc, vv)
            })
            .collect();
        Self::from_rows(self.n, rows)
    }

    /// Removes explicit zeros.
    pub fn compact(&self) -> SparseSymMatrix {
        self.retain(|_, _, v| v != 0.0)
    }

    pub fn to_dense(&self) -> DenseSymMatrix {
        let mut d = DenseSymMatrix::zeros(self.n);
        for (i, j, v) in self.iter() {
            d.as_mut_slice()[i * self.n + j] = v;
        }
        d
    }

    pub fn is_structurally_symmetric(&self) -> bool {
        self.iter().all(|(i, j, _)| self.contains(j, i))
    }
}

/// General sparse matrix in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub rows: usize,
    pub cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Rows given as `(column, value)` lists; zeros are skipped.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for mut r in rows.iter().cloned() {
            r.sort_unstable_by_key(|e| e.0);
            for (c, v) in r {
                if v != 0.0 {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { rows: rows.len(), cols, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn matvec_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, yi) in y.iter().enumerate() {
            for (j, v) in self.row(i) {
                out[j] += v * yi;
            }
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.iter() {
            m[(i, j)] = v;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_symmetry_on_write() {
        let mut a = DenseSymMatrix::zeros(3);
        a.set(0, 2, 5.0);
        assert_eq!(a.get(2, 0), 5.0);
        assert!(DenseSymMatrix::from_row_major(2, vec![1.0, 2.0, 3.0, 1.0], 1e-12).is_err());
    }

    #[test]
    fn sparse_from_triplets() {
        let m = SparseSymMatrix::from_upper_triplets(3, vec![(0, 0, 2.0), (0, 2, 1.0), (1, 1, 3.0), (0, 2, 0.5)]).unwrap();
        assert_eq!(m.nnz(), 4);
        assert_eq!(m.get(2, 0), 1.5);
        assert!(m.is_structurally_symmetric());
        assert_eq!(m.matvec(&[1.0, 1.0, 1.0]), vec![3.5, 3.0, 1.5]);
        assert!(SparseSymMatrix::from_upper_triplets(3, vec![(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn retain_and_scale() {
        let d = DenseSymMatrix::from_upper_fn(4, |i, j| 1.0 + (i + j) as f64);
        let s = SparseSymMatrix::from_dense(&d);
        assert_eq!(s.to_dense(), d);
        let band = s.retain(|i, j, _| j - i <= 1);
        assert_eq!(band.nnz(), 10);
        assert!(band.is_structurally_symmetric());
        let mut scaled = band.clone();
        scaled.scale_symmetric(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(scaled.get(1, 2), band.get(1, 2) * 6.0);
    }

    #[test]
    fn csr_products() {
        let g = CsrMatrix::from_rows(3, vec![vec![(0, 1.0), (2, 2.0)], vec![(1, -1.0)]]);
        assert_eq!(g.matvec(&[1.0, 2.0, 3.0]), vec![7.0, -2.0]);
        assert_eq!(g.matvec_transpose(&[1.0, 1.0]), vec![1.0, -1.0, 2.0]);
    }
}
