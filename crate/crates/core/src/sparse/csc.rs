use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Compressed sparse column matrix with sorted, duplicate-free row indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix<T> {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<T>,
}

/// Coordinate-format accumulator. Duplicate entries are summed on conversion.
#[derive(Debug, Clone)]
pub struct TripletBuilder<T> {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Real> TripletBuilder<T> {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: T) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sums duplicates and keeps explicit zeros, so the structural pattern is
    /// exactly the set of pushed coordinates.
    pub fn build(mut self) -> CscMatrix<T> {
        self.entries.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut col_ptr = vec![0usize; self.ncols + 1];
        let mut row_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<T> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_idx.push(r);
                values.push(v);
                col_ptr[c + 1] += 1;
                last = Some((r, c));
            }
        }
        for c in 0..self.ncols {
            col_ptr[c + 1] += col_ptr[c];
        }
        CscMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            col_ptr,
            row_idx,
            values,
        }
    }
}

impl<T: Real> CscMatrix<T> {
    pub fn from_parts(
        nrows: usize,
        ncols: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        if col_ptr.len() != ncols + 1
            || row_idx.len() != values.len()
            || *col_ptr.last().unwrap_or(&0) != row_idx.len()
        {
            return Err(Error::Dimension("inconsistent CSC arrays".into()));
        }
        for c in 0..ncols {
            let rows = &row_idx[col_ptr[c]..col_ptr[c + 1]];
            if rows.windows(2).any(|w| w[0] >= w[1]) || rows.iter().any(|&r| r >= nrows) {
                return Err(Error::Dimension(format!("column {c} rows unsorted or out of range")));
            }
        }
        Ok(Self {
            nrows,
            ncols,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            col_ptr: vec![0; ncols + 1],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![T::one(); n])
    }

    pub fn diagonal(d: &[T]) -> Self {
        let n = d.len();
        Self {
            nrows: n,
            ncols: n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: d.to_vec(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Row indices and values of column `c`.
    pub fn col(&self, c: usize) -> (&[usize], &[T]) {
        let r = self.col_ptr[c]..self.col_ptr[c + 1];
        (&self.row_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        let (rows, vals) = self.col(col);
        match rows.binary_search(&row) {
            Ok(k) => vals[k],
            Err(_) => T::zero(),
        }
    }

    /// Position of `(row, col)` in the value array, if structurally present.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let start = self.col_ptr[col];
        let rows = &self.row_idx[start..self.col_ptr[col + 1]];
        rows.binary_search(&row).ok().map(|k| start + k)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.ncols).flat_map(move |c| {
            (self.col_ptr[c]..self.col_ptr[c + 1]).map(move |k| (self.row_idx[k], c, self.values[k]))
        })
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![T::zero(); self.nrows];
        for c in 0..self.ncols {
            let xc = x[c];
            if xc == T::zero() {
                continue;
            }
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[k]] += self.values[k] * xc;
            }
        }
        y
    }

    /// `selfᵀ · x`.
    pub fn tr_mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.nrows);
        (0..self.ncols)
            .map(|c| {
                (self.col_ptr[c]..self.col_ptr[c + 1])
                    .map(|k| self.values[k] * x[self.row_idx[k]])
                    .sum()
            })
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.nrows + 1];
        for &r in &self.row_idx {
            counts[r + 1] += 1;
        }
        for r in 0..self.nrows {
            counts[r + 1] += counts[r];
        }
        let col_ptr = counts.clone();
        let mut next = counts;
        let mut row_idx = vec![0; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        for c in 0..self.ncols {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[k];
                let dst = next[r];
                next[r] += 1;
                row_idx[dst] = c;
                values[dst] = self.values[k];
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `a·self + b·other`, pattern is the union of both.
    pub fn add_scaled(&self, a: T, other: &Self, b: T) -> Result<Self> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::Dimension(format!(
                "{}x{} + {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        let mut col_ptr = Vec::with_capacity(self.ncols + 1);
        col_ptr.push(0);
        let mut row_idx = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        for c in 0..self.ncols {
            let (ra, va) = self.col(c);
            let (rb, vb) = other.col(c);
            let (mut i, mut j) = (0, 0);
            while i < ra.len() || j < rb.len() {
                let take_a = j >= rb.len() || (i < ra.len() && ra[i] <= rb[j]);
                let take_b = i >= ra.len() || (j < rb.len() && rb[j] <= ra[i]);
                if take_a && take_b {
                    row_idx.push(ra[i]);
                    values.push(a * va[i] + b * vb[j]);
                    i += 1;
                    j += 1;
                } else if take_a {
                    row_idx.push(ra[i]);
                    values.push(a * va[i]);
                    i += 1;
                } else {
                    row_idx.push(rb[j]);
                    values.push(b * vb[j]);
                    j += 1;
                }
            }
            col_ptr.push(row_idx.len());
        }
        Ok(Self {
            nrows: self.nrows,
            ncols: self.ncols,
            col_ptr,
            row_idx,
            values,
        })
    }

    /// Sparse product `self · other`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.ncols != other.nrows {
            return Err(Error::Dimension(format!(
                "{}x{} * {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        let mut work = vec![T::zero(); self.nrows];
        let mut mark = vec![usize::MAX; self.nrows];
        let mut col_ptr = Vec::with_capacity(other.ncols + 1);
        col_ptr.push(0);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        let mut touched = Vec::new();
        for c in 0..other.ncols {
            touched.clear();
            for kb in other.col_ptr[c]..other.col_ptr[c + 1] {
                let mid = other.row_idx[kb];
                let bv = other.values[kb];
                for ka in self.col_ptr[mid]..self.col_ptr[mid + 1] {
                    let r = self.row_idx[ka];
                    if mark[r] != c {
                        mark[r] = c;
                        work[r] = T::zero();
                        touched.push(r);
                    }
                    work[r] += self.values[ka] * bv;
                }
            }
            touched.sort_unstable();
            for &r in &touched {
                row_idx.push(r);
                values.push(work[r]);
            }
            col_ptr.push(row_idx.len());
        }
        Ok(Self {
            nrows: self.nrows,
            ncols: other.ncols,
            col_ptr,
            row_idx,
            values,
        })
    }

    /// Kronecker product `self ⊗ other`; the index of `other` varies fastest.
    pub fn kron(&self, other: &Self) -> Self {
        let nrows = self.nrows * other.nrows;
        let ncols = self.ncols * other.ncols;
        let mut col_ptr = Vec::with_capacity(ncols + 1);
        col_ptr.push(0);
        let mut row_idx = Vec::with_capacity(self.nnz() * other.nnz());
        let mut values = Vec::with_capacity(self.nnz() * other.nnz());
        for ca in 0..self.ncols {
            for cb in 0..other.ncols {
                for ka in self.col_ptr[ca]..self.col_ptr[ca + 1] {
                    let ra = self.row_idx[ka];
                    let va = self.values[ka];
                    for kb in other.col_ptr[cb]..other.col_ptr[cb + 1] {
                        row_idx.push(ra * other.nrows + other.row_idx[kb]);
                        values.push(va * other.values[kb]);
                    }
                }
                col_ptr.push(row_idx.len());
            }
        }
        Self {
            nrows,
            ncols,
            col_ptr,
            row_idx,
            values,
        }
    }

    /// Places `self` at block offset `(r0, c0)` inside a larger builder.
    pub fn scatter_into(&self, out: &mut TripletBuilder<T>, r0: usize, c0: usize) {
        for (r, c, v) in self.iter() {
            out.push(r0 + r, c0 + c, v);
        }
    }

    /// Maximum absolute asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for (r, c, v) in self.iter() {
            let d = (v - self.get(c, r)).abs();
            if d > worst {
                worst = d;
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.ncols]; self.nrows];
        for (r, c, v) in self.iter() {
            d[r][c] = v;
        }
        d
    }

    /// Row-wise view used by projector-style consumers: `rows[i]` lists `(col, value)`.
    pub fn rows(&self) -> Vec<Vec<(usize, T)>> {
        let mut out = vec![Vec::new(); self.nrows];
        for (r, c, v) in self.iter() {
            out[r].push((c, v));
        }
        out
    }

    pub fn from_dense(d: &[Vec<T>]) -> Self {
        let nrows = d.len();
        let ncols = d.first().map_or(0, |r| r.len());
        let mut b = TripletBuilder::new(nrows, ncols);
        for (i, row) in d.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != T::zero() {
                    b.push(i, j, v);
                }
            }
        }
        b.build()
    }

    /// Values of `self` laid out on the structure of `pattern`, which must
    /// contain every structural entry of `self`.
    pub fn values_on(&self, pattern: &CscMatrix<T>) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); pattern.nnz()];
        for (r, c, v) in self.iter() {
            let p = pattern
                .position(r, c)
                .ok_or_else(|| Error::Dimension(format!("entry ({r}, {c}) missing from pattern")))?;
            out[p] += v;
        }
        Ok(out)
    }

    /// Same structure as `self` with new values.
    pub fn with_values(&self, values: Vec<T>) -> Self {
        assert_eq!(values.len(), self.nnz());
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            col_ptr: self.col_ptr.clone(),
            row_idx: self.row_idx.clone(),
            values,
        }
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U) -> CscMatrix<U> {
        CscMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            col_ptr: self.col_ptr.clone(),
            row_idx: self.row_idx.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Sparse row vector used for linear predictors over the latent field.
pub type SparseRow<T> = Vec<(usize, T)>;

/// Merges duplicate indices in a sparse row.
pub fn compact_row<T: Real>(row: SparseRow<T>) -> SparseRow<T> {
    let mut acc: BTreeMap<usize, T> = BTreeMap::new();
    for (i, v) in row {
        *acc.entry(i).or_insert(T::zero()) += v;
    }
    acc.into_iter().collect()
}
