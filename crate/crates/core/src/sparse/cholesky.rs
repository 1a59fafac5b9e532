//! Up-looking sparse Cholesky factorization `P A Pᵀ = L Lᵀ`.
//!
//! The symbolic phase (ordering, elimination tree, row and column structure
//! of `L`) depends only on the sparsity pattern and is shared through an
//! `Arc` so repeated factorizations of matrices with a fixed pattern only
//! pay for the numeric phase.

use std::sync::Arc;

use super::csc::CscMatrix;
use super::ordering::{invert, minimum_degree, nested_dissection, reverse_cuthill_mckee};
use crate::error::{Error, Result};
use crate::scalar::{count, lit, Real};

/// Pattern-only analysis of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymbolicCholesky {
    n: usize,
    perm: Vec<usize>,
    pinv: Vec<usize>,
    source_nnz: usize,
    source_col_ptr: Vec<usize>,
    // position in the permuted upper triangle for each source entry with row <= col
    source_map: Vec<usize>,
    upper_col_ptr: Vec<usize>,
    upper_row_idx: Vec<usize>,
    // source entries missing a structural diagonal get one here
    diag_pos: Vec<usize>,
    l_col_ptr: Vec<usize>,
    l_row_idx: Vec<usize>,
    // pattern of row k of L (excluding the diagonal) in elimination order
    row_ptr: Vec<usize>,
    row_cols: Vec<usize>,
}

const LOWER_ENTRY: usize = usize::MAX;

/// Exact minimum degree works on an explicit elimination graph and is only
/// tried up to this dimension.
const MD_MAX_DIM: usize = 2500;

impl SymbolicCholesky {
    /// Analyzes `a` (full symmetric or upper-triangular storage), keeping
    /// whichever fill-reducing ordering needs the fewest factorization
    /// flops: reverse Cuthill–McKee, nested dissection and, for small
    /// matrices, exact minimum degree.
    pub fn analyze<T: Real>(a: &CscMatrix<T>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension("Cholesky needs a square matrix".into()));
        }
        let (n, cp, ri) = (a.nrows(), a.col_ptr(), a.row_idx());
        let mut best = Self::analyze_with_perm(a, reverse_cuthill_mckee(n, cp, ri))?;
        let mut candidates = vec![nested_dissection(n, cp, ri)];
        if n <= MD_MAX_DIM {
            candidates.push(minimum_degree(n, cp, ri));
        }
        for perm in candidates {
            let s = Self::analyze_with_perm(a, perm)?;
            if s.flops() < best.flops() {
                best = s;
            }
        }
        Ok(best)
    }

    pub fn analyze_with_perm<T: Real>(a: &CscMatrix<T>, perm: Vec<usize>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || perm.len() != n {
            return Err(Error::Dimension("permutation length mismatch".into()));
        }
        let pinv = invert(&perm);

        // permuted upper triangle; every diagonal is structurally present
        let mut coords: Vec<(usize, usize, usize)> = Vec::with_capacity(a.nnz() / 2 + n);
        for c in 0..n {
            let start = a.col_ptr()[c];
            for (off, &r) in a.row_idx()[start..a.col_ptr()[c + 1]].iter().enumerate() {
                if r <= c {
                    let (pi, pj) = (pinv[r], pinv[c]);
                    coords.push((pi.max(pj), pi.min(pj), start + off));
                }
            }
        }
        for j in 0..n {
            coords.push((j, j, usize::MAX));
        }
        coords.sort_unstable();
        let mut upper_col_ptr = vec![0usize; n + 1];
        let mut upper_row_idx = Vec::with_capacity(coords.len());
        let mut source_map = vec![LOWER_ENTRY; a.nnz()];
        let mut diag_pos = vec![0usize; n];
        let mut last = None;
        for (col, row, src) in coords {
            if last != Some((col, row)) {
                upper_row_idx.push(row);
                upper_col_ptr[col + 1] += 1;
                last = Some((col, row));
            }
            let pos = upper_row_idx.len() - 1;
            if src != usize::MAX {
                source_map[src] = pos;
            }
            if row == col {
                diag_pos[col] = pos;
            }
        }
        for j in 0..n {
            upper_col_ptr[j + 1] += upper_col_ptr[j];
        }

        let parent = etree(n, &upper_col_ptr, &upper_row_idx);

        // row structure of L via elimination-tree reach
        let mut mark = vec![usize::MAX; n];
        let mut stack = vec![0usize; n];
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut row_cols = Vec::new();
        let mut col_counts = vec![1usize; n];
        for k in 0..n {
            let top = ereach(k, &upper_col_ptr, &upper_row_idx, &parent, &mut mark, &mut stack);
            for &i in &stack[top..n] {
                col_counts[i] += 1;
            }
            row_cols.extend_from_slice(&stack[top..n]);
            row_ptr.push(row_cols.len());
        }
        let mut l_col_ptr = vec![0usize; n + 1];
        for j in 0..n {
            l_col_ptr[j + 1] = l_col_ptr[j] + col_counts[j];
        }
        let mut next = l_col_ptr.clone();
        let mut l_row_idx = vec![0usize; l_col_ptr[n]];
        for k in 0..n {
            for &i in &row_cols[row_ptr[k]..row_ptr[k + 1]] {
                l_row_idx[next[i]] = k;
                next[i] += 1;
            }
            l_row_idx[next[k]] = k;
            next[k] += 1;
        }
        // diagonal sits first in each column: it is written at step k,
        // the rows below it at later steps
        Ok(Self {
            n,
            perm,
            pinv,
            source_nnz: a.nnz(),
            source_col_ptr: a.col_ptr().to_vec(),
            source_map,
            upper_col_ptr,
            upper_row_idx,
            diag_pos,
            l_col_ptr,
            l_row_idx,
            row_ptr,
            row_cols,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn nnz_l(&self) -> usize {
        self.l_row_idx.len()
    }

    /// Multiply-adds of one numeric factorization, `Σ_j c_j²` over the
    /// column counts of `L`.
    pub fn flops(&self) -> f64 {
        self.l_col_ptr.windows(2).map(|w| ((w[1] - w[0]) as f64).powi(2)).sum()
    }

    fn check_pattern<T: Real>(&self, a: &CscMatrix<T>) -> Result<()> {
        if a.nrows() != self.n || a.nnz() != self.source_nnz || a.col_ptr() != self.source_col_ptr.as_slice() {
            return Err(Error::Dimension("matrix pattern differs from symbolic analysis".into()));
        }
        Ok(())
    }
}

fn etree(n: usize, col_ptr: &[usize], row_idx: &[usize]) -> Vec<usize> {
    let mut parent = vec![usize::MAX; n];
    let mut ancestor = vec![usize::MAX; n];
    for k in 0..n {
        for &r in &row_idx[col_ptr[k]..col_ptr[k + 1]] {
            let mut i = r;
            while i != usize::MAX && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == usize::MAX {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of `L`, written to `stack[top..n]` in
/// topological order. `mark` uses `k` as the generation stamp.
fn ereach(
    k: usize,
    col_ptr: &[usize],
    row_idx: &[usize],
    parent: &[usize],
    mark: &mut [usize],
    stack: &mut [usize],
) -> usize {
    let n = parent.len();
    let mut top = n;
    mark[k] = k;
    for &r in &row_idx[col_ptr[k]..col_ptr[k + 1]] {
        let mut i = r;
        if i > k {
            continue;
        }
        let mut len = 0;
        while mark[i] != k {
            stack[len] = i;
            len += 1;
            mark[i] = k;
            i = parent[i];
        }
        while len > 0 {
            len -= 1;
            top -= 1;
            stack[top] = stack[len];
        }
    }
    top
}

/// Numeric Cholesky factor.
#[derive(Debug, Clone)]
pub struct CholeskyFactor<T> {
    symbolic: Arc<SymbolicCholesky>,
    l_values: Vec<T>,
    jitter: T,
}

/// Maximum number of ×10 escalations after the first jitter attempt.
pub const JITTER_ESCALATIONS: usize = 3;
pub const JITTER_INITIAL: f64 = 1e-8;

impl<T: Real> CholeskyFactor<T> {
    /// Factorizes `a`. On failure a diagonal shift of `1e-8·mean(diag)` is
    /// added and escalated ×10 up to three times before giving up.
    pub fn factorize(symbolic: Arc<SymbolicCholesky>, a: &CscMatrix<T>) -> Result<Self> {
        symbolic.check_pattern(a)?;
        let upper = scatter_upper(&symbolic, a);
        let mut pivot = match numeric(&symbolic, &upper, T::zero()) {
            Ok(l_values) => {
                return Ok(Self {
                    symbolic,
                    l_values,
                    jitter: T::zero(),
                })
            }
            Err(p) => p,
        };
        let n = symbolic.n.max(1);
        let mean_diag = symbolic
            .diag_pos
            .iter()
            .map(|&p| upper[p].abs())
            .fold(T::zero(), |a, b| a + b)
            / count::<T>(n);
        let base = if mean_diag > T::zero() { mean_diag } else { T::one() };
        let mut shift = base * lit(JITTER_INITIAL);
        for _ in 0..=JITTER_ESCALATIONS {
            match numeric(&symbolic, &upper, shift) {
                Ok(l_values) => {
                    log::warn!("Cholesky succeeded after diagonal jitter {:e}", shift);
                    return Ok(Self {
                        symbolic,
                        l_values,
                        jitter: shift,
                    });
                }
                Err(p) => pivot = p,
            }
            shift *= lit(10.0);
        }
        Err(Error::NotPositiveDefinite {
            pivot,
            attempts: JITTER_ESCALATIONS + 1,
        })
    }

    /// Factorization without any jitter fallback.
    pub fn factorize_exact(symbolic: Arc<SymbolicCholesky>, a: &CscMatrix<T>) -> Result<Self> {
        symbolic.check_pattern(a)?;
        let upper = scatter_upper(&symbolic, a);
        numeric(&symbolic, &upper, T::zero())
            .map(|l_values| Self {
                symbolic,
                l_values,
                jitter: T::zero(),
            })
            .map_err(|pivot| Error::NotPositiveDefinite { pivot, attempts: 0 })
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    /// Diagonal shift applied during factorization (zero if none).
    pub fn jitter(&self) -> T {
        self.jitter
    }

    pub fn n(&self) -> usize {
        self.symbolic.n
    }

    pub fn logdet(&self) -> T {
        let s = &self.symbolic;
        let two = lit::<T>(2.0);
        (0..s.n).map(|j| two * self.l_values[s.l_col_ptr[j]].ln()).sum()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let s = &self.symbolic;
        assert_eq!(b.len(), s.n);
        let mut w: Vec<T> = s.perm.iter().map(|&p| b[p]).collect();
        self.forward(&mut w);
        self.backward(&mut w);
        let mut x = vec![T::zero(); s.n];
        for (k, &p) in s.perm.iter().enumerate() {
            x[p] = w[k];
        }
        x
    }

    /// Returns `Pᵀ L⁻ᵀ z`, which has covariance `A⁻¹` when `z` is standard normal.
    pub fn solve_lt_permuted(&self, z: &[T]) -> Vec<T> {
        let s = &self.symbolic;
        assert_eq!(z.len(), s.n);
        let mut w = z.to_vec();
        self.backward(&mut w);
        let mut x = vec![T::zero(); s.n];
        for (k, &p) in s.perm.iter().enumerate() {
            x[p] = w[k];
        }
        x
    }

    fn forward(&self, w: &mut [T]) {
        let s = &self.symbolic;
        for j in 0..s.n {
            let p0 = s.l_col_ptr[j];
            w[j] /= self.l_values[p0];
            let wj = w[j];
            for p in p0 + 1..s.l_col_ptr[j + 1] {
                w[s.l_row_idx[p]] -= self.l_values[p] * wj;
            }
        }
    }

    fn backward(&self, w: &mut [T]) {
        let s = &self.symbolic;
        for j in (0..s.n).rev() {
            let p0 = s.l_col_ptr[j];
            let mut acc = w[j];
            for p in p0 + 1..s.l_col_ptr[j + 1] {
                acc -= self.l_values[p] * w[s.l_row_idx[p]];
            }
            w[j] = acc / self.l_values[p0];
        }
    }

    /// Entries of `A⁻¹` on the pattern of `L + Lᵀ` (Takahashi recursions).
    pub fn selected_inverse(&self) -> SelectedInverse<T> {
        let s = &self.symbolic;
        let n = s.n;
        let lp = &s.l_col_ptr;
        let li = &s.l_row_idx;
        let lx = &self.l_values;
        let mut sx = vec![T::zero(); lx.len()];
        let mut map = vec![usize::MAX; n];
        let mut z: Vec<T> = Vec::new();
        for j in (0..n).rev() {
            let d0 = lp[j];
            let end = lp[j + 1];
            let rows = &li[d0 + 1..end];
            let lcol = &lx[d0 + 1..end];
            for (a, &r) in rows.iter().enumerate() {
                map[r] = a;
            }
            z.clear();
            z.resize(rows.len(), T::zero());
            for (a, &c) in rows.iter().enumerate() {
                let lcj = lcol[a];
                for p in lp[c]..lp[c + 1] {
                    let b = map[li[p]];
                    if b == usize::MAX {
                        continue;
                    }
                    let sv = sx[p];
                    z[b] += lcj * sv;
                    if b != a {
                        z[a] += lcol[b] * sv;
                    }
                }
            }
            let ljj = lx[d0];
            let mut diag = T::one() / (ljj * ljj);
            for a in 0..rows.len() {
                let v = -z[a] / ljj;
                sx[d0 + 1 + a] = v;
                diag -= lcol[a] * v / ljj;
            }
            sx[d0] = diag;
            for &r in rows {
                map[r] = usize::MAX;
            }
        }
        SelectedInverse {
            symbolic: Arc::clone(&self.symbolic),
            values: sx,
        }
    }
}

fn scatter_upper<T: Real>(s: &SymbolicCholesky, a: &CscMatrix<T>) -> Vec<T> {
    let mut upper = vec![T::zero(); s.upper_row_idx.len()];
    for (k, &pos) in s.source_map.iter().enumerate() {
        if pos != LOWER_ENTRY {
            upper[pos] += a.values()[k];
        }
    }
    upper
}

fn numeric<T: Real>(s: &SymbolicCholesky, upper: &[T], shift: T) -> std::result::Result<Vec<T>, usize> {
    let n = s.n;
    let mut lx = vec![T::zero(); s.l_row_idx.len()];
    let mut next: Vec<usize> = s.l_col_ptr[..n].to_vec();
    let mut x = vec![T::zero(); n];
    for k in 0..n {
        for p in s.upper_col_ptr[k]..s.upper_col_ptr[k + 1] {
            x[s.upper_row_idx[p]] = upper[p];
        }
        let mut d = x[k] + shift;
        x[k] = T::zero();
        for &i in &s.row_cols[s.row_ptr[k]..s.row_ptr[k + 1]] {
            let p0 = s.l_col_ptr[i];
            let lki = x[i] / lx[p0];
            x[i] = T::zero();
            for p in p0 + 1..next[i] {
                x[s.l_row_idx[p]] -= lx[p] * lki;
            }
            d -= lki * lki;
            lx[next[i]] = lki;
            next[i] += 1;
        }
        if !(d > T::zero()) || !d.is_finite() {
            return Err(s.perm[k]);
        }
        lx[next[k]] = d.sqrt();
        next[k] += 1;
    }
    Ok(lx)
}

/// Selected entries of the inverse of a factorized matrix.
#[derive(Debug, Clone)]
pub struct SelectedInverse<T> {
    symbolic: Arc<SymbolicCholesky>,
    values: Vec<T>,
}

impl<T: Real> SelectedInverse<T> {
    /// `(A⁻¹)_{ij}` in original indexing, if `(i, j)` is in the factor pattern.
    pub fn get(&self, i: usize, j: usize) -> Option<T> {
        let s = &self.symbolic;
        let (pi, pj) = (s.pinv[i], s.pinv[j]);
        let (row, col) = (pi.max(pj), pi.min(pj));
        let rows = &s.l_row_idx[s.l_col_ptr[col]..s.l_col_ptr[col + 1]];
        rows.binary_search(&row).ok().map(|k| self.values[s.l_col_ptr[col] + k])
    }

    pub fn diag(&self) -> Vec<T> {
        let s = &self.symbolic;
        (0..s.n).map(|i| self.values[s.l_col_ptr[s.pinv[i]]]).collect()
    }

    /// `aᵀ A⁻¹ a` for a sparse vector whose support lies in one clique of the pattern.
    pub fn quad_form(&self, a: &[(usize, T)]) -> Option<T> {
        let mut acc = T::zero();
        for (x, &(i, ai)) in a.iter().enumerate() {
            acc += ai * ai * self.get(i, i)?;
            for &(j, aj) in &a[x + 1..] {
                acc += lit::<T>(2.0) * ai * aj * self.get(i, j)?;
            }
        }
        Some(acc)
    }

    /// `aᵀ A⁻¹ b` for two sparse vectors whose joint support lies in the pattern.
    pub fn bilinear(&self, a: &[(usize, T)], b: &[(usize, T)]) -> Option<T> {
        let mut acc = T::zero();
        for &(i, ai) in a {
            for &(j, bj) in b {
                acc += ai * bj * self.get(i, j)?;
            }
        }
        Some(acc)
    }
}
