use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Compressed sparse row matrix. Only ever used as a constant operand.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        offsets: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if offsets.len() != rows + 1 || offsets.first() != Some(&0) {
            return Err(Error::shape("sparse", "offsets must have rows+1 entries starting at 0"));
        }
        if offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::shape("sparse", "offsets must be non-decreasing"));
        }
        if offsets[rows] != indices.len() || indices.len() != values.len() {
            return Err(Error::shape("sparse", "offsets, indices and values disagree"));
        }
        if let Some(&bad) = indices.iter().find(|&&c| c >= cols) {
            return Err(Error::Index {
                what: "columns",
                index: bad,
                len: cols,
            });
        }
        Ok(SparseMatrix {
            rows,
            cols,
            offsets,
            indices,
            values,
        })
    }

    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(r, c, _) in &sorted {
            if r >= rows {
                return Err(Error::Index {
                    what: "rows",
                    index: r,
                    len: rows,
                });
            }
            if c >= cols {
                return Err(Error::Index {
                    what: "columns",
                    index: c,
                    len: cols,
                });
            }
        }
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut offsets = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            offsets[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            offsets[r + 1] += offsets[r];
        }
        SparseMatrix::new(rows, cols, offsets, indices, values)
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            offsets: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Keeps the nonzeros of a dense matrix.
    pub fn from_dense(t: &Tensor) -> Self {
        let mut offsets = Vec::with_capacity(t.rows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        offsets.push(0);
        for r in 0..t.rows() {
            for (c, &v) in t.row(r).iter().enumerate() {
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            offsets.push(indices.len());
        }
        SparseMatrix {
            rows: t.rows(),
            cols: t.cols(),
            offsets,
            indices,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(column, value)` pairs of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[r]..self.offsets[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                t.set(r, c, t.get(r, c) + v);
            }
        }
        t
    }

    /// Copy with the listed rows emptied.
    pub fn with_zeroed_rows(&self, zero: &[bool]) -> SparseMatrix {
        let mut offsets = Vec::with_capacity(self.rows + 1);
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        offsets.push(0);
        for r in 0..self.rows {
            if !zero.get(r).copied().unwrap_or(false) {
                for (c, v) in self.row(r) {
                    indices.push(c);
                    values.push(v);
                }
            }
            offsets.push(indices.len());
        }
        SparseMatrix {
            rows: self.rows,
            cols: self.cols,
            offsets,
            indices,
            values,
        }
    }

    /// `self · d`.
    pub fn mul_dense(&self, d: &Tensor) -> Result<Tensor> {
        if self.cols != d.rows() {
            return Err(Error::shape(
                "spmm",
                format!("{}x{} · {}x{}", self.rows, self.cols, d.rows(), d.cols()),
            ));
        }
        let mut out = Tensor::zeros(self.rows, d.cols());
        for r in 0..self.rows {
            let span = self.offsets[r]..self.offsets[r + 1];
            let out_row = out.row_mut(r);
            for (&c, &v) in self.indices[span.clone()].iter().zip(&self.values[span]) {
                for (o, &x) in out_row.iter_mut().zip(d.row(c)) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// `out += selfᵀ · g`.
    pub(crate) fn t_mul_dense_into(&self, g: &Tensor, out: &mut Tensor) {
        for r in 0..self.rows {
            let span = self.offsets[r]..self.offsets[r + 1];
            let g_row = g.row(r);
            for (&c, &v) in self.indices[span.clone()].iter().zip(&self.values[span]) {
                for (o, &x) in out.row_mut(c).iter_mut().zip(g_row) {
                    *o += v * x;
                }
            }
        }
    }
}
