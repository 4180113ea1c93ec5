//! Square real matrices with dense or compressed-row storage.
//!
//! Every matrix in this crate is square. Dense storage is row-major; sparse
//! storage is CSR with sorted column indices and no explicit zeros. Both
//! representations expose the same nonzero iteration, so the numerical code
//! downstream never branches on storage.

use crate::error::{Error, Result};

/// Dimension above which [`Storage::auto`] switches to sparse storage.
pub const SPARSE_THRESHOLD: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Storage {
    Dense,
    Sparse,
}

impl Storage {
    pub fn auto(n: usize) -> Storage {
        if n > SPARSE_THRESHOLD {
            Storage::Sparse
        } else {
            Storage::Dense
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Matrix {
    Dense(DenseMatrix),
    Sparse(CsrMatrix),
}

/// Iterator over the nonzero `(column, value)` pairs of one row.
pub enum RowIter<'a> {
    Dense(std::iter::Enumerate<std::slice::Iter<'a, f64>>),
    Sparse(std::iter::Zip<std::slice::Iter<'a, usize>, std::slice::Iter<'a, f64>>),
}

impl Iterator for RowIter<'_> {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            RowIter::Dense(it) => it.by_ref().find(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)),
            RowIter::Sparse(it) => it.next().map(|(j, v)| (*j, *v)),
        }
    }
}

impl Matrix {
    pub fn zeros(n: usize, storage: Storage) -> Matrix {
        match storage {
            Storage::Dense => Matrix::Dense(DenseMatrix {
                n,
                data: vec![0.0; n * n],
            }),
            Storage::Sparse => Matrix::Sparse(CsrMatrix {
                n,
                indptr: vec![0; n + 1],
                indices: Vec::new(),
                values: Vec::new(),
            }),
        }
    }

    pub fn identity(n: usize) -> Matrix {
        Matrix::from_triplets(n, (0..n).map(|i| (i, i, 1.0)), Storage::auto(n)).expect("diagonal indices are in range")
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicate positions are summed.
    pub fn from_triplets<I>(n: usize, triplets: I, storage: Storage) -> Result<Matrix>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        match storage {
            Storage::Dense => {
                let mut data = vec![0.0; n * n];
                for (i, j, v) in triplets {
                    check_index(n, i, j)?;
                    data[i * n + j] += v;
                }
                Ok(Matrix::Dense(DenseMatrix { n, data }))
            }
            Storage::Sparse => {
                let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
                for (i, j, v) in triplets {
                    check_index(n, i, j)?;
                    rows[i].push((j, v));
                }
                let mut indptr = Vec::with_capacity(n + 1);
                let mut indices = Vec::new();
                let mut values = Vec::new();
                indptr.push(0);
                for mut row in rows {
                    row.sort_by_key(|&(j, _)| j);
                    let mut k = 0;
                    while k < row.len() {
                        let j = row[k].0;
                        let mut v = 0.0;
                        while k < row.len() && row[k].0 == j {
                            v += row[k].1;
                            k += 1;
                        }
                        if v != 0.0 {
                            indices.push(j);
                            values.push(v);
                        }
                    }
                    indptr.push(indices.len());
                }
                Ok(Matrix::Sparse(CsrMatrix {
                    n,
                    indptr,
                    indices,
                    values,
                }))
            }
        }
    }

    /// Dense matrix from row vectors; every row must have length `rows.len()`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!(
                    "row {i} has length {} but the matrix has {n} rows",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix::Dense(DenseMatrix { n, data }))
    }

    pub fn n(&self) -> usize {
        match self {
            Matrix::Dense(d) => d.n,
            Matrix::Sparse(s) => s.n,
        }
    }

    pub fn storage(&self) -> Storage {
        match self {
            Matrix::Dense(_) => Storage::Dense,
            Matrix::Sparse(_) => Storage::Sparse,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Matrix::Dense(d) => d.data[i * d.n + j],
            Matrix::Sparse(s) => {
                let cols = &s.indices[s.indptr[i]..s.indptr[i + 1]];
                match cols.binary_search(&j) {
                    Ok(k) => s.values[s.indptr[i] + k],
                    Err(_) => 0.0,
                }
            }
        }
    }

    pub fn row(&self, i: usize) -> RowIter<'_> {
        match self {
            Matrix::Dense(d) => RowIter::Dense(d.data[i * d.n..(i + 1) * d.n].iter().enumerate()),
            Matrix::Sparse(s) => {
                let range = s.indptr[i]..s.indptr[i + 1];
                RowIter::Sparse(s.indices[range.clone()].iter().zip(s.values[range].iter()))
            }
        }
    }

    /// All nonzero entries as `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n()).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn nnz(&self) -> usize {
        match self {
            Matrix::Dense(d) => d.data.iter().filter(|v| **v != 0.0).count(),
            Matrix::Sparse(s) => s.values.len(),
        }
    }

    pub fn with_storage(&self, storage: Storage) -> Matrix {
        if storage == self.storage() {
            return self.clone();
        }
        Matrix::from_triplets(self.n(), self.triplets(), storage).expect("indices come from a valid matrix")
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut rows = vec![vec![0.0; n]; n];
        for (i, j, v) in self.triplets() {
            rows[i][j] = v;
        }
        rows
    }

    /// `y = A x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n());
        (0..self.n())
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `y = Aᵀ x`
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n());
        let mut y = vec![0.0; self.n()];
        for (i, xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                y[j] += v * xi;
            }
        }
        y
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n()];
        for (_, j, v) in self.triplets() {
            sums[j] += v;
        }
        sums
    }

    /// `diag(r) · A · diag(c)`, keeping the storage kind.
    pub fn scaled(&self, r: &[f64], c: &[f64]) -> Matrix {
        match self {
            Matrix::Dense(d) => {
                let n = d.n;
                let mut data = d.data.clone();
                for i in 0..n {
                    for j in 0..n {
                        data[i * n + j] *= r[i] * c[j];
                    }
                }
                Matrix::Dense(DenseMatrix { n, data })
            }
            Matrix::Sparse(s) => {
                let mut out = s.clone();
                for (i, ri) in r.iter().enumerate() {
                    for k in s.indptr[i]..s.indptr[i + 1] {
                        out.values[k] *= ri * c[s.indices[k]];
                    }
                }
                Matrix::Sparse(out)
            }
        }
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_triplets(self.n(), self.triplets().map(|(i, j, v)| (j, i, v)), self.storage())
            .expect("indices come from a valid matrix")
    }

    /// Largest entrywise absolute difference. Panics on dimension mismatch.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.n(), other.n(), "dimension mismatch");
        let n = self.n();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.get(i, j) - other.get(i, j)).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.triplets().all(|(i, j, v)| (v - self.get(j, i)).abs() <= tol)
    }

    /// Dense product `A · B`, used for moment checks on small operators.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n(), other.n(), "dimension mismatch");
        let n = self.n();
        let mut data = vec![0.0; n * n];
        for (i, k, a) in self.triplets() {
            for (j, b) in other.row(k) {
                data[i * n + j] += a * b;
            }
        }
        Matrix::Dense(DenseMatrix { n, data })
    }
}

fn check_index(n: usize, i: usize, j: usize) -> Result<()> {
    if i >= n || j >= n {
        return Err(Error::invalid(format!("entry ({i}, {j}) outside a {n}x{n} matrix")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(storage: Storage) -> Matrix {
        Matrix::from_triplets(3, [(0, 1, 2.0), (1, 0, 1.0), (2, 2, 4.0), (1, 2, -1.0)], storage).unwrap()
    }

    #[test]
    fn dense_and_sparse_agree() {
        let d = sample(Storage::Dense);
        let s = sample(Storage::Sparse);
        let x = [1.0, 2.0, 3.0];
        assert_eq!(d.matvec(&x), s.matvec(&x));
        assert_eq!(d.matvec_transpose(&x), s.matvec_transpose(&x));
        assert_eq!(d.row_sums(), s.row_sums());
        assert_eq!(d.col_sums(), s.col_sums());
        assert_eq!(d.nnz(), 4);
        assert_eq!(s.nnz(), 4);
        assert_eq!(d.to_rows(), s.to_rows());
        assert_eq!(s.get(1, 2), -1.0);
        assert_eq!(s.get(0, 0), 0.0);
    }

    #[test]
    fn sparse_sums_duplicates_and_drops_zeros() {
        let s = Matrix::from_triplets(2, [(0, 0, 1.0), (0, 0, 2.0), (1, 1, 0.0)], Storage::Sparse).unwrap();
        assert_eq!(s.get(0, 0), 3.0);
        assert_eq!(s.nnz(), 1);
    }

    #[test]
    fn out_of_range_triplet_rejected() {
        assert!(Matrix::from_triplets(2, [(2, 0, 1.0)], Storage::Dense).is_err());
    }

    #[test]
    fn auto_storage_switches_above_threshold() {
        assert_eq!(Storage::auto(512), Storage::Dense);
        assert_eq!(Storage::auto(513), Storage::Sparse);
    }

    #[test]
    fn transpose_and_scale() {
        let m = sample(Storage::Sparse);
        let t = m.transpose();
        assert_eq!(t.get(1, 0), 2.0);
        let sc = m.scaled(&[1.0, 2.0, 3.0], &[10.0, 1.0, 1.0]);
        assert_eq!(sc.get(1, 0), 20.0);
        assert_eq!(sc.get(2, 2), 12.0);
    }
}
