//! Row-compressed sparse input batches for the MLP.
//!
//! Pooled feature vectors keep only a few node blocks, so the first MLP layer
//! multiplies a CSR matrix by a dense weight matrix.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::pooling::SparseFeatureVector;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRows {
    pub fn from_dense(x: &Array2<f64>) -> Self {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for row in x.rows() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            n_cols: x.ncols(),
            indptr,
            indices,
            values,
        }
    }

    /// Stacks pooled vectors as rows; all must share the same length.
    pub fn from_vectors<'a, I>(vectors: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a SparseFeatureVector>,
    {
        let mut n_cols = None;
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for v in vectors {
            let len = v.total_len();
            match n_cols {
                None => n_cols = Some(len),
                Some(c) if c != len => {
                    return Err(Error::Shape(format!(
                        "pooled vectors differ in length: {c} vs {len}"
                    )))
                }
                _ => {}
            }
            for &(p, x) in &v.entries {
                indices.push(p);
                values.push(x);
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            n_cols: n_cols.unwrap_or(0),
            indptr,
            indices,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    /// Rows `rows`, in that order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for &r in rows {
            let (idx, val) = self.row(r);
            indices.extend_from_slice(idx);
            values.extend_from_slice(val);
            indptr.push(indices.len());
        }
        Self {
            n_cols: self.n_cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.nrows(), self.n_cols));
        for i in 0..self.nrows() {
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                out[[i, j]] = v;
            }
        }
        out
    }

    /// `self · w`.
    pub fn matmul(&self, w: &Array2<f64>) -> Result<Array2<f64>> {
        if w.nrows() != self.n_cols {
            return Err(Error::Shape(format!(
                "input has {} columns but weight has {} rows",
                self.n_cols,
                w.nrows()
            )));
        }
        let mut out = Array2::zeros((self.nrows(), w.ncols()));
        for i in 0..self.nrows() {
            let (idx, val) = self.row(i);
            let mut acc = out.row_mut(i);
            for (&j, &v) in idx.iter().zip(val) {
                acc.scaled_add(v, &w.row(j));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · g`.
    pub fn transpose_matmul(&self, g: &Array2<f64>) -> Result<Array2<f64>> {
        if g.nrows() != self.nrows() {
            return Err(Error::Shape(format!(
                "input has {} rows but gradient has {}",
                self.nrows(),
                g.nrows()
            )));
        }
        let mut out = Array2::zeros((self.n_cols, g.ncols()));
        for i in 0..self.nrows() {
            let (idx, val) = self.row(i);
            let src = g.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                out.row_mut(j).scaled_add(v, &src);
            }
        }
        Ok(out)
    }
}
