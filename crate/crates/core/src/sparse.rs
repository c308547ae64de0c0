//! Compressed sparse row storage and the two products the model needs.
//!
//! Summation inside every output entry runs over stored columns in ascending
//! order, so a product against a CSR copy of a dense matrix is bit-identical
//! to the naive `k = 0..n` loop over the dense matrix.

use ndarray::Array2;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists. Columns must be strictly
    /// increasing within a row.
    pub fn from_rows(n_cols: usize, rows: &[Vec<(usize, f64)>]) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        indptr.push(0);
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for &(c, v) in row {
                debug_assert!(c < n_cols);
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            n_rows: rows.len(),
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    /// Drops exact zeros.
    pub fn from_dense(m: &Array2<f64>) -> Self {
        let mut indptr = Vec::with_capacity(m.nrows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        let dense = m.as_standard_layout();
        let flat = dense.as_slice().expect("standard layout");
        for row in flat.chunks(m.ncols().max(1)).take(m.nrows()) {
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            n_rows: m.nrows(),
            n_cols: m.ncols(),
            indptr,
            indices,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows, self.n_cols));
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                out[[i, j]] = v;
            }
        }
        out
    }

    /// `self · rhs`
    pub fn mul_dense(&self, rhs: &Array2<f64>) -> Array2<f64> {
        assert_eq!(self.n_cols, rhs.nrows(), "csr · dense inner dimension");
        let k = rhs.ncols();
        let mut out = Array2::zeros((self.n_rows, k));
        for i in 0..self.n_rows {
            let mut out_row = out.row_mut(i);
            let out_row = out_row.as_slice_mut().expect("fresh array is contiguous");
            for (j, v) in self.row(i) {
                let r = rhs.row(j);
                for (o, &x) in out_row.iter_mut().zip(r.iter()) {
                    *o += v * x;
                }
            }
        }
        out
    }

    /// `selfᵀ · rhs`
    pub fn t_mul_dense(&self, rhs: &Array2<f64>) -> Array2<f64> {
        assert_eq!(self.n_rows, rhs.nrows(), "csrᵀ · dense inner dimension");
        let k = rhs.ncols();
        let mut out = Array2::zeros((self.n_cols, k));
        for i in 0..self.n_rows {
            let r = rhs.row(i);
            for (j, v) in self.row(i) {
                let mut o = out.row_mut(j);
                for (o, &x) in o.iter_mut().zip(r.iter()) {
                    *o += v * x;
                }
            }
        }
        out
    }
}
