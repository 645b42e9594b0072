use ndarray::Array2;

use crate::error::{Error, Result};

/// Sparse matrix in row-major coordinate form.
///
/// Entries are sorted by `(row, col)` and coalesced on construction, so a
/// given position appears at most once. `row_ptr` indexes the first entry of
/// every row, CSR style.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_idx: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    row_ptr: Vec<usize>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, weight)` triplets. Weights at repeated
    /// positions are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(r, c, w) in &entries {
            if r >= rows || c >= cols {
                return Err(Error::invalid(format!(
                    "sparse entry ({r}, {c}) out of bounds for {rows}x{cols}"
                )));
            }
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("sparse entry ({r}, {c})")));
            }
        }
        entries.sort_by_key(|a| (a.0, a.1));

        let mut row_idx = Vec::with_capacity(entries.len());
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        for (r, c, w) in entries {
            if row_idx.last() == Some(&r) && col_idx.last() == Some(&c) {
                *values.last_mut().unwrap() += w;
            } else {
                row_idx.push(r);
                col_idx.push(c);
                values.push(w);
            }
        }

        let mut row_ptr = vec![0usize; rows + 1];
        for &r in &row_idx {
            row_ptr[r + 1] += 1;
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }

        Ok(Self {
            rows,
            cols,
            row_idx,
            col_idx,
            values,
            row_ptr,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect()).expect("identity entries are in bounds")
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates `(row, col, weight)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.row_idx
            .iter()
            .zip(&self.col_idx)
            .zip(&self.values)
            .map(|((&r, &c), &w)| (r, c, w))
    }

    /// Entries `(col, weight)` of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.cols, self.rows, self.iter().map(|(r, c, w)| (c, r, w)).collect())
            .expect("transposed entries stay in bounds")
    }

    /// Divides every row by its sum. Empty rows stay empty.
    pub fn row_normalized(&self) -> Self {
        let mut out = self.clone();
        for r in 0..self.rows {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            let total: f64 = self.values[span.clone()].iter().sum();
            if total != 0.0 {
                for v in &mut out.values[span] {
                    *v /= total;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for (r, c, w) in self.iter() {
            out[[r, c]] = w;
        }
        out
    }

    /// `self * x` for a dense right operand.
    pub fn matmul_dense(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if self.cols != x.nrows() {
            return Err(Error::Shape {
                op: "sparse_dense_matmul",
                lhs: self.shape(),
                rhs: x.dim(),
            });
        }
        let mut out = Array2::zeros((self.rows, x.ncols()));
        for r in 0..self.rows {
            let mut out_row = out.row_mut(r);
            for (c, w) in self.row(r) {
                out_row.scaled_add(w, &x.row(c));
            }
        }
        Ok(out)
    }

    /// `selfᵀ * x` without materializing the transpose.
    pub fn transpose_matmul_dense(&self, x: &Array2<f64>) -> Array2<f64> {
        debug_assert_eq!(self.rows, x.nrows());
        let mut out = Array2::zeros((self.cols, x.ncols()));
        for (r, c, w) in self.iter() {
            out.row_mut(c).scaled_add(w, &x.row(r));
        }
        out
    }
}
