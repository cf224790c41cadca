//! Up-looking sparse Cholesky factorization with a reusable symbolic phase.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::banded::{BandedCholesky, BandedSymmetric};
use super::ordering::Ordering;
use super::symmetric::{SparsePattern, SparseSymmetric};

const NONE: usize = usize::MAX;

/// Pattern-only part of the factorization: permutation, elimination tree and
/// the column layout of `L`. Reusable for every matrix sharing the pattern.
#[derive(Clone, Debug)]
pub struct SymbolicCholesky {
    pattern: Arc<SparsePattern>,
    perm: Vec<usize>,
    // permuted matrix C = P A Pᵀ in upper compressed-column form
    c_ptr: Vec<usize>,
    c_row: Vec<usize>,
    c_src: Vec<usize>,
    parent: Vec<usize>,
    l_ptr: Vec<usize>,
}

impl SymbolicCholesky {
    pub fn analyze(pattern: Arc<SparsePattern>, ordering: Ordering) -> Result<Self> {
        let perm = ordering.permutation(&pattern);
        Self::with_permutation(pattern, perm)
    }

    pub fn with_permutation(pattern: Arc<SparsePattern>, perm: Vec<usize>) -> Result<Self> {
        let n = pattern.dim();
        if perm.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: perm.len() });
        }
        let mut pinv = vec![NONE; n];
        for (k, &i) in perm.iter().enumerate() {
            if i >= n || pinv[i] != NONE {
                return Err(Error::InvalidArgument("ordering is not a permutation".into()));
            }
            pinv[i] = k;
        }

        let mut cols: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (q, (i, j)) in pattern.positions().enumerate() {
            let (a, b) = (pinv[i], pinv[j]);
            let (r, c) = if a <= b { (a, b) } else { (b, a) };
            cols[c].push((r, q));
        }
        let mut c_ptr = Vec::with_capacity(n + 1);
        let mut c_row = Vec::with_capacity(pattern.nnz());
        let mut c_src = Vec::with_capacity(pattern.nnz());
        c_ptr.push(0);
        for col in cols.iter_mut() {
            col.sort_unstable();
            for &(r, q) in col.iter() {
                c_row.push(r);
                c_src.push(q);
            }
            c_ptr.push(c_row.len());
        }

        let parent = etree(n, &c_ptr, &c_row);

        // column counts of L by walking every row subtree
        let mut counts = vec![1usize; n];
        let mut stack = vec![0usize; n];
        let mut mark = vec![NONE; n];
        for k in 0..n {
            let top = ereach(k, &c_ptr, &c_row, &parent, &mut stack, &mut mark);
            for &j in &stack[top..] {
                counts[j] += 1;
            }
        }
        let mut l_ptr = Vec::with_capacity(n + 1);
        l_ptr.push(0);
        for c in counts {
            l_ptr.push(l_ptr.last().unwrap() + c);
        }
        Ok(SymbolicCholesky { pattern, perm, c_ptr, c_row, c_src, parent, l_ptr })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn pattern(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Number of stored entries of `L`, diagonal included.
    pub fn factor_nnz(&self) -> usize {
        *self.l_ptr.last().unwrap()
    }
}

fn etree(n: usize, c_ptr: &[usize], c_row: &[usize]) -> Vec<usize> {
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for &r in &c_row[c_ptr[k]..c_ptr[k + 1]] {
            let mut i = r;
            while i != NONE && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == NONE {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of `L` (excluding the diagonal) in topological
/// order, returned as `stack[top..]`.
fn ereach(
    k: usize,
    c_ptr: &[usize],
    c_row: &[usize],
    parent: &[usize],
    stack: &mut [usize],
    mark: &mut [usize],
) -> usize {
    let n = parent.len();
    let mut top = n;
    mark[k] = k;
    let mut path = Vec::new();
    for &r in &c_row[c_ptr[k]..c_ptr[k + 1]] {
        if r > k {
            continue;
        }
        let mut i = r;
        path.clear();
        while mark[i] != k {
            path.push(i);
            mark[i] = k;
            i = parent[i];
            if i == NONE {
                break;
            }
        }
        while let Some(v) = path.pop() {
            top -= 1;
            stack[top] = v;
        }
    }
    top
}

/// Numeric sparse factor `P A Pᵀ = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct SparseCholesky<T> {
    symbolic: Arc<SymbolicCholesky>,
    l_row: Vec<usize>,
    l_val: Vec<T>,
    log_det: T,
}

impl<T: Real> SparseCholesky<T> {
    pub fn factor(symbolic: Arc<SymbolicCholesky>, a: &SparseSymmetric<T>) -> Result<Self> {
        let n = symbolic.dim();
        if a.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, got: a.dim() });
        }
        if a.pattern().as_ref() != symbolic.pattern.as_ref() {
            return Err(Error::InvalidArgument("matrix pattern differs from the analyzed pattern".into()));
        }
        let vals = a.values();
        let s = symbolic.as_ref();
        let nnz = s.factor_nnz();
        let mut l_row = vec![0usize; nnz];
        let mut l_val = vec![T::zero(); nnz];
        let mut next: Vec<usize> = s.l_ptr[..n].to_vec();
        let mut x = vec![T::zero(); n];
        let mut stack = vec![0usize; n];
        let mut mark = vec![NONE; n];
        let mut log_det = T::zero();

        for k in 0..n {
            let top = ereach(k, &s.c_ptr, &s.c_row, &s.parent, &mut stack, &mut mark);
            for p in s.c_ptr[k]..s.c_ptr[k + 1] {
                let r = s.c_row[p];
                if r <= k {
                    x[r] += vals[s.c_src[p]];
                }
            }
            let mut d = x[k];
            x[k] = T::zero();
            for &j in &stack[top..] {
                let lkj = x[j] / l_val[s.l_ptr[j]];
                x[j] = T::zero();
                for p in (s.l_ptr[j] + 1)..next[j] {
                    x[l_row[p]] -= l_val[p] * lkj;
                }
                d -= lkj * lkj;
                let p = next[j];
                next[j] += 1;
                l_row[p] = k;
                l_val[p] = lkj;
            }
            if !(d.value() > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { column: s.perm[k], pivot: d.value() });
            }
            let lkk = d.sqrt();
            log_det += lkk.ln();
            let p = next[k];
            next[k] += 1;
            l_row[p] = k;
            l_val[p] = lkk;
        }
        Ok(SparseCholesky { symbolic, l_row, l_val, log_det: log_det + log_det })
    }

    pub fn dim(&self) -> usize {
        self.symbolic.dim()
    }

    pub fn log_determinant(&self) -> T {
        self.log_det
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    /// `L` as lower-triangle triplets in the permuted index space.
    pub fn lower_triplets(&self) -> Vec<(usize, usize, T)> {
        let lp = &self.symbolic.l_ptr;
        (0..self.dim())
            .flat_map(|j| (lp[j]..lp[j + 1]).map(move |p| (j, p)))
            .map(|(j, p)| (self.l_row[p], j, self.l_val[p]))
            .collect()
    }

    fn lower_solve(&self, y: &mut [T]) {
        let lp = &self.symbolic.l_ptr;
        for j in 0..self.dim() {
            y[j] /= self.l_val[lp[j]];
            let yj = y[j];
            for p in (lp[j] + 1)..lp[j + 1] {
                y[self.l_row[p]] -= self.l_val[p] * yj;
            }
        }
    }

    fn upper_solve(&self, y: &mut [T]) {
        let lp = &self.symbolic.l_ptr;
        for j in (0..self.dim()).rev() {
            let mut s = y[j];
            for p in (lp[j] + 1)..lp[j + 1] {
                s -= self.l_val[p] * y[self.l_row[p]];
            }
            y[j] = s / self.l_val[lp[j]];
        }
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: b.len() });
        }
        let perm = &self.symbolic.perm;
        let mut y: Vec<T> = perm.iter().map(|&i| b[i]).collect();
        self.lower_solve(&mut y);
        self.upper_solve(&mut y);
        let mut out = vec![T::zero(); n];
        for (k, &i) in perm.iter().enumerate() {
            out[i] = y[k];
        }
        Ok(out)
    }

    /// `Pᵀ L⁻ᵀ z`: maps a standard-normal vector to a draw with covariance `A⁻¹`.
    pub fn solve_lt(&self, z: &[T]) -> Result<Vec<T>> {
        let n = self.dim();
        if z.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: z.len() });
        }
        let mut y = z.to_vec();
        self.upper_solve(&mut y);
        let mut out = vec![T::zero(); n];
        for (k, &i) in self.symbolic.perm.iter().enumerate() {
            out[i] = y[k];
        }
        Ok(out)
    }
}

/// Cholesky factor of a sparse or banded symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub enum CholeskyFactor<T> {
    Sparse(SparseCholesky<T>),
    Banded(BandedCholesky<T>),
}

impl<T: Real> CholeskyFactor<T> {
    pub fn dim(&self) -> usize {
        match self {
            CholeskyFactor::Sparse(f) => f.dim(),
            CholeskyFactor::Banded(f) => f.dim(),
        }
    }

    /// `log |A| = 2 Σ log L_ii`.
    pub fn log_determinant(&self) -> T {
        match self {
            CholeskyFactor::Sparse(f) => f.log_determinant(),
            CholeskyFactor::Banded(f) => f.log_determinant(),
        }
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        match self {
            CholeskyFactor::Sparse(f) => f.solve(b),
            CholeskyFactor::Banded(f) => f.solve(b),
        }
    }

    pub fn solve_lt(&self, z: &[T]) -> Result<Vec<T>> {
        match self {
            CholeskyFactor::Sparse(f) => f.solve_lt(z),
            CholeskyFactor::Banded(f) => {
                if z.len() != f.dim() {
                    return Err(Error::DimensionMismatch { expected: f.dim(), got: z.len() });
                }
                let mut y = z.to_vec();
                f.solve_upper_in_place(&mut y);
                Ok(y)
            }
        }
    }

    /// Dense `P L Lᵀ Pᵀ`, for verification.
    pub fn reconstruct(&self) -> Vec<Vec<T>> {
        let n = self.dim();
        let mut l = vec![vec![T::zero(); n]; n];
        let perm: Vec<usize> = match self {
            CholeskyFactor::Sparse(f) => {
                for (i, j, v) in f.lower_triplets() {
                    l[i][j] = v;
                }
                f.symbolic.perm.clone()
            }
            CholeskyFactor::Banded(f) => {
                for (i, row) in l.iter_mut().enumerate() {
                    for (j, v) in row.iter_mut().enumerate().take(i + 1) {
                        *v = f.lower(i, j);
                    }
                }
                (0..n).collect()
            }
        };
        let mut out = vec![vec![T::zero(); n]; n];
        for a in 0..n {
            for b in 0..=a {
                let mut s = T::zero();
                for k in 0..=b {
                    s += l[a][k] * l[b][k];
                }
                out[perm[a]][perm[b]] = s;
                out[perm[b]][perm[a]] = s;
            }
        }
        out
    }
}

/// Factorizes a sparse matrix with the given ordering.
pub fn cholesky<T: Real>(a: &SparseSymmetric<T>, ordering: Ordering) -> Result<CholeskyFactor<T>> {
    let symbolic = Arc::new(SymbolicCholesky::analyze(a.pattern().clone(), ordering)?);
    Ok(CholeskyFactor::Sparse(SparseCholesky::factor(symbolic, a)?))
}

pub fn cholesky_banded<T: Real>(a: &BandedSymmetric<T>) -> Result<CholeskyFactor<T>> {
    Ok(CholeskyFactor::Banded(BandedCholesky::factor(a)?))
}
