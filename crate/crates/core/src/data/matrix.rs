//! Compressed-sparse-row storage for binary and ternary user×item matrices,
//! plus a small row-major dense matrix for probability tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 0/1 matrix stored row-major; only the positions of ones are kept.
///
/// Column indices inside a row are strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SparseBinaryMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
}

impl SparseBinaryMatrix {
    /// An all-zero matrix.
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            indptr: vec![0; n_rows + 1],
            indices: Vec::new(),
        }
    }

    /// Builds a matrix from per-row column lists. Rows are sorted; duplicate or
    /// out-of-range columns are rejected.
    pub fn from_rows<R: AsRef<[usize]>>(n_cols: usize, rows: &[R]) -> Result<Self> {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        let mut scratch: Vec<usize> = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            scratch.clear();
            scratch.extend_from_slice(row.as_ref());
            scratch.sort_unstable();
            for w in scratch.windows(2) {
                if w[0] == w[1] {
                    return Err(Error::InvalidParameter(format!(
                        "row {r} lists column {} twice",
                        w[0]
                    )));
                }
            }
            if let Some(&last) = scratch.last() {
                if last >= n_cols {
                    return Err(Error::DimensionMismatch(format!(
                        "row {r} has column {last} but the matrix has {n_cols} columns"
                    )));
                }
            }
            indices.extend(scratch.iter().map(|&c| c as u32));
            indptr.push(indices.len());
        }
        Ok(Self {
            n_rows: rows.len(),
            n_cols,
            indptr,
            indices,
        })
    }

    /// Builds a matrix by evaluating `f(row, col)` on every cell.
    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for r in 0..n_rows {
            for c in 0..n_cols {
                if f(r, c) {
                    indices.push(c as u32);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            n_rows,
            n_cols,
            indptr,
            indices,
        }
    }

    /// Builds a matrix from dense 0/1 rows; any nonzero byte counts as one.
    pub fn from_dense<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != n_cols) {
            return Err(Error::DimensionMismatch("ragged dense rows".into()));
        }
        Ok(Self::from_fn(rows.len(), n_cols, |r, c| rows[r].as_ref()[c] != 0))
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    /// Number of stored ones.
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Sorted column indices of the ones in row `r`.
    #[inline]
    pub fn row(&self, r: usize) -> &[u32] {
        &self.indices[self.indptr[r]..self.indptr[r + 1]]
    }

    #[inline]
    pub fn row_nnz(&self, r: usize) -> usize {
        self.indptr[r + 1] - self.indptr[r]
    }

    /// Euclidean norm of row `r`, which is `sqrt(nnz)` for binary values.
    pub fn row_l2norm(&self, r: usize) -> f64 {
        (self.row_nnz(r) as f64).sqrt()
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.row(r).binary_search(&(c as u32)).is_ok()
    }

    /// Iterates `(row, col)` over all ones in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row(r).iter().map(move |&c| (r, c as usize)))
    }

    /// Explicitly materialized transpose.
    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.indices {
            counts[c as usize + 1] += 1;
        }
        for c in 0..self.n_cols {
            counts[c + 1] += counts[c];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0u32; self.indices.len()];
        for r in 0..self.n_rows {
            for &c in self.row(r) {
                let slot = &mut next[c as usize];
                indices[*slot] = r as u32;
                *slot += 1;
            }
        }
        Self {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            indptr,
            indices,
        }
    }

    /// Number of ones in each column.
    pub fn col_sums(&self) -> Vec<usize> {
        let mut sums = vec![0usize; self.n_cols];
        for &c in &self.indices {
            sums[c as usize] += 1;
        }
        sums
    }

    /// Entrywise `self AND other`.
    pub fn and(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a && b)
    }

    /// Entrywise `self AND NOT other`.
    pub fn and_not(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a && !b)
    }

    /// Entrywise `self OR other`.
    pub fn or(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a || b)
    }

    fn combine(&self, other: &Self, op: impl Fn(bool, bool) -> bool) -> Result<Self> {
        self.check_same_shape(other)?;
        let mut indptr = Vec::with_capacity(self.n_rows + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for r in 0..self.n_rows {
            let (a, b) = (self.row(r), other.row(r));
            let (mut i, mut j) = (0, 0);
            while i < a.len() || j < b.len() {
                let (col, in_a, in_b) = match (a.get(i), b.get(j)) {
                    (Some(&x), Some(&y)) if x == y => {
                        i += 1;
                        j += 1;
                        (x, true, true)
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        i += 1;
                        (x, true, false)
                    }
                    (Some(&x), None) => {
                        i += 1;
                        (x, true, false)
                    }
                    (_, Some(&y)) => {
                        j += 1;
                        (y, false, true)
                    }
                    (None, None) => unreachable!(),
                };
                if op(in_a, in_b) {
                    indices.push(col);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            indptr,
            indices,
        })
    }

    pub(crate) fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}

/// A sparse matrix with values in {-1, 0, 1}; zeros are implicit.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TernaryMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<i8>,
}

impl TernaryMatrix {
    /// `plus - minus` entrywise, for binary operands.
    pub fn difference(plus: &SparseBinaryMatrix, minus: &SparseBinaryMatrix) -> Result<Self> {
        plus.check_same_shape(minus)?;
        let mut indptr = Vec::with_capacity(plus.n_rows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in 0..plus.n_rows() {
            let (a, b) = (plus.row(r), minus.row(r));
            let (mut i, mut j) = (0, 0);
            while i < a.len() || j < b.len() {
                match (a.get(i), b.get(j)) {
                    (Some(&x), Some(&y)) if x == y => {
                        i += 1;
                        j += 1;
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        indices.push(x);
                        values.push(1);
                        i += 1;
                    }
                    (Some(&x), None) => {
                        indices.push(x);
                        values.push(1);
                        i += 1;
                    }
                    (_, Some(&y)) => {
                        indices.push(y);
                        values.push(-1);
                        j += 1;
                    }
                    (None, None) => unreachable!(),
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            n_rows: plus.n_rows(),
            n_cols: plus.n_cols(),
            indptr,
            indices,
            values,
        })
    }

    /// Builds a matrix from `(row, col, value)` entries. Zero values are dropped.
    pub fn from_entries(
        n_rows: usize,
        n_cols: usize,
        entries: impl IntoIterator<Item = (usize, usize, i8)>,
    ) -> Result<Self> {
        let mut rows: Vec<Vec<(u32, i8)>> = vec![Vec::new(); n_rows];
        for (r, c, v) in entries {
            if r >= n_rows || c >= n_cols {
                return Err(Error::DimensionMismatch(format!(
                    "entry ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
            if !(-1..=1).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "ternary value {v} at ({r}, {c})"
                )));
            }
            if v != 0 {
                rows[r].push((c as u32, v));
            }
        }
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for (r, mut row) in rows.into_iter().enumerate() {
            row.sort_unstable_by_key(|e| e.0);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidParameter(format!("duplicate column in row {r}")));
            }
            for (c, v) in row {
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    /// Builds a matrix from dense rows.
    pub fn from_dense<R: AsRef<[i8]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != n_cols) {
            return Err(Error::DimensionMismatch("ragged dense rows".into()));
        }
        Self::from_entries(
            rows.len(),
            n_cols,
            rows.iter()
                .enumerate()
                .flat_map(|(r, row)| row.as_ref().iter().enumerate().map(move |(c, &v)| (r, c, v))),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Columns and values of the nonzero entries in row `r`.
    #[inline]
    pub fn row(&self, r: usize) -> (&[u32], &[i8]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> i8 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&(c as u32)).map_or(0, |p| vals[p])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, i8)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c as usize, v))
        })
    }

    /// Sum of all entries.
    pub fn sum(&self) -> i64 {
        self.values.iter().map(|&v| v as i64).sum()
    }

    /// Mean over all `n_rows * n_cols` cells; 0 for an empty matrix.
    pub fn mean(&self) -> f64 {
        let cells = self.n_rows * self.n_cols;
        if cells == 0 {
            0.0
        } else {
            self.sum() as f64 / cells as f64
        }
    }
}

/// Row-major dense matrix of reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self::filled(n_rows, n_cols, 0.0)
    }

    pub fn filled(n_rows: usize, n_cols: usize, value: f64) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![value; n_rows * n_cols],
        }
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in 0..n_rows {
            for c in 0..n_cols {
                data.push(f(r, c));
            }
        }
        Self {
            n_rows,
            n_cols,
            data,
        }
    }

    pub fn from_vec(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {n_rows}x{n_cols} matrix",
                data.len()
            )));
        }
        Ok(Self {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n_cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n_cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}
