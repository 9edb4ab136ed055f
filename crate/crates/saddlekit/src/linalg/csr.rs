//! Compressed sparse row storage with an optional physical dimension.

use super::LinalgError;
use crate::units::Dimension;

/// Triplet accumulator; duplicate entries sum on compression.
#[derive(Debug, Clone, Default)]
pub struct CooBuilder {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CooBuilder {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        CooBuilder { n_rows, n_cols, entries: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.entries.push((row, col, value));
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut current_row = 0;
        for (r, c, v) in self.entries {
            while current_row < r {
                row_ptr.push(col_idx.len());
                current_row += 1;
            }
            if col_idx.len() > row_ptr[current_row] && *col_idx.last().unwrap() == c {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
            }
        }
        while current_row < self.n_rows {
            row_ptr.push(col_idx.len());
            current_row += 1;
        }
        CsrMatrix { n_rows: self.n_rows, n_cols: self.n_cols, row_ptr, col_idx, values, dim: None }
    }
}

/// Sparse matrix in CSR form. Column indices are sorted and unique within
/// each row. The optional [`Dimension`] is the matrix's physical unit as an
/// operator between coefficient vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    dim: Option<Dimension>,
}

impl CsrMatrix {
    pub fn identity(n: usize) -> CsrMatrix {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
            dim: None,
        }
    }

    pub fn from_parts(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> CsrMatrix {
        debug_assert_eq!(row_ptr.len(), n_rows + 1);
        debug_assert_eq!(col_idx.len(), values.len());
        CsrMatrix { n_rows, n_cols, row_ptr, col_idx, values, dim: None }
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

    pub fn dim(&self) -> Option<Dimension> {
        self.dim
    }

    pub fn with_dimension(mut self, dim: Dimension) -> CsrMatrix {
        self.dim = Some(dim);
        self
    }

    pub fn set_dimension(&mut self, dim: Option<Dimension>) {
        self.dim = dim;
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `y = A x`
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[i] = acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y += alpha * A^T x`
    pub fn matvec_transpose_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_rows);
        debug_assert_eq!(y.len(), self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let xi = alpha * x[i];
            for (c, v) in cols.iter().zip(vals) {
                y[*c] += v * xi;
            }
        }
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_cols];
        self.matvec_transpose_add(1.0, x, &mut y);
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut builder = CooBuilder::new(self.n_cols, self.n_rows);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                builder.push(*c, i, *v);
            }
        }
        let mut t = builder.build();
        t.dim = self.dim;
        t
    }

    /// Scales values, keeping the attached dimension.
    pub fn scaled(&self, alpha: f64) -> CsrMatrix {
        let mut m = self.clone();
        for v in &mut m.values {
            *v *= alpha;
        }
        m
    }

    /// Scales values and multiplies the attached dimension by `factor_dim`.
    pub fn scaled_dim(&self, alpha: f64, factor_dim: Dimension) -> CsrMatrix {
        let mut m = self.scaled(alpha);
        m.dim = self.dim.map(|d| d * factor_dim);
        m
    }

    /// `alpha * self + beta * other` with pattern union. The attached
    /// dimension is taken from `self` (callers combine terms of equal unit).
    pub fn linear_combination(&self, alpha: f64, beta: f64, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.n_rows, other.n_rows);
        assert_eq!(self.n_cols, other.n_cols);
        let mut builder = CooBuilder::new(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                builder.push(i, *c, alpha * v);
            }
            let (cols, vals) = other.row(i);
            for (c, v) in cols.iter().zip(vals) {
                builder.push(i, *c, beta * v);
            }
        }
        let mut m = builder.build();
        m.dim = self.dim;
        m
    }

    /// Expands a scalar operator to `components` interleaved vector
    /// components: entry `(i, j)` becomes `(components*i + c, components*j + c)`.
    pub fn expand_components(&self, components: usize) -> CsrMatrix {
        let mut row_ptr = Vec::with_capacity(self.n_rows * components + 1);
        let mut col_idx = Vec::with_capacity(self.nnz() * components);
        let mut values = Vec::with_capacity(self.nnz() * components);
        row_ptr.push(0);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for c in 0..components {
                for (j, v) in cols.iter().zip(vals) {
                    col_idx.push(components * j + c);
                    values.push(*v);
                }
                row_ptr.push(col_idx.len());
            }
        }
        CsrMatrix {
            n_rows: self.n_rows * components,
            n_cols: self.n_cols * components,
            row_ptr,
            col_idx,
            values,
            dim: self.dim,
        }
    }

    /// Keeps the rows in `row_keep` and columns in `col_keep` (both sorted,
    /// interpreted in the original index space).
    pub fn restricted(&self, row_keep: &[usize], col_keep: &[usize]) -> CsrMatrix {
        let mut col_map = vec![usize::MAX; self.n_cols];
        for (new, &old) in col_keep.iter().enumerate() {
            col_map[old] = new;
        }
        let mut row_ptr = Vec::with_capacity(row_keep.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for &old_row in row_keep {
            let (cols, vals) = self.row(old_row);
            for (c, v) in cols.iter().zip(vals) {
                let nc = col_map[*c];
                if nc != usize::MAX {
                    col_idx.push(nc);
                    values.push(*v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n_rows: row_keep.len(),
            n_cols: col_keep.len(),
            row_ptr,
            col_idx,
            values,
            dim: self.dim,
        }
    }

    /// Value-level symmetry to a relative tolerance.
    pub fn is_value_symmetric(&self, rel_tol: f64) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        let scale = self
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                if (v - self.get(*c, i)).abs() > rel_tol * scale {
                    return false;
                }
            }
        }
        true
    }

    /// Largest relative entry difference against `other`, over the union of
    /// both patterns.
    pub fn max_relative_difference(&self, other: &CsrMatrix) -> f64 {
        assert_eq!(self.n_rows, other.n_rows);
        assert_eq!(self.n_cols, other.n_cols);
        let scale = self
            .values
            .iter()
            .chain(other.values.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                worst = worst.max((v - other.get(i, *c)).abs() / scale);
            }
            let (cols, vals) = other.row(i);
            for (c, v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(i, *c)).abs() / scale);
            }
        }
        worst
    }

    pub fn to_dense(&self) -> super::DenseMatrix {
        let mut d = super::DenseMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                d[(i, *c)] = *v;
            }
        }
        d
    }

    pub fn ensure_symmetric(&self, rel_tol: f64) -> Result<(), LinalgError> {
        if self.is_value_symmetric(rel_tol) {
            Ok(())
        } else {
            Err(LinalgError::NotSymmetric)
        }
    }
}
