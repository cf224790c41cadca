use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Lower-triangle sparsity pattern in compressed-column form.
///
/// Row indices inside each column are strictly increasing and never smaller than
/// the column index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparsePattern {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
}

impl SparsePattern {
    /// Builds a pattern from arbitrary `(i, j)` positions; each position is folded
    /// into the lower triangle and duplicates are merged.
    pub fn from_entries<I>(n: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n == 0 {
            return Err(Error::InvalidArgument("matrix dimension must be positive".into()));
        }
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, j) in entries {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch { expected: n, got: i.max(j) + 1 });
            }
            let (r, c) = if i >= j { (i, j) } else { (j, i) };
            cols[c].push(r);
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for mut col in cols {
            col.sort_unstable();
            col.dedup();
            row_idx.extend_from_slice(&col);
            col_ptr.push(row_idx.len());
        }
        Ok(SparsePattern { n, col_ptr, row_idx })
    }

    /// Same as [`from_entries`](Self::from_entries) but guarantees every diagonal
    /// position is present.
    pub fn from_entries_with_diagonal<I>(n: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        Self::from_entries(n, entries.into_iter().chain((0..n).map(|i| (i, i))))
    }

    pub fn dense_lower(n: usize) -> Self {
        let mut col_ptr = vec![0];
        let mut row_idx = Vec::with_capacity(n * (n + 1) / 2);
        for j in 0..n {
            row_idx.extend(j..n);
            col_ptr.push(row_idx.len());
        }
        SparsePattern { n, col_ptr, row_idx }
    }

    pub fn banded(n: usize, half_bandwidth: usize) -> Self {
        let mut col_ptr = vec![0];
        let mut row_idx = Vec::new();
        for j in 0..n {
            row_idx.extend(j..n.min(j + half_bandwidth + 1));
            col_ptr.push(row_idx.len());
        }
        SparsePattern { n, col_ptr, row_idx }
    }

    pub fn union(&self, other: &SparsePattern) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: other.n });
        }
        Self::from_entries(self.n, self.positions().chain(other.positions()))
    }

    pub fn dim(&self) -> usize {
        self.n
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

    pub fn column(&self, j: usize) -> &[usize] {
        &self.row_idx[self.col_ptr[j]..self.col_ptr[j + 1]]
    }

    /// Storage offset of `(i, j)` (either triangle), if stored.
    #[inline]
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if c >= self.n {
            return None;
        }
        let start = self.col_ptr[c];
        self.row_idx[start..self.col_ptr[c + 1]].binary_search(&r).ok().map(|off| start + off)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.position(i, j).is_some()
    }

    /// Iterates stored lower-triangle positions `(row, col)`.
    pub fn positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |j| self.column(j).iter().map(move |&i| (i, j)))
    }

    pub fn half_bandwidth(&self) -> usize {
        self.positions().map(|(i, j)| i - j).max().unwrap_or(0)
    }

    /// Full symmetric adjacency (both triangles, no diagonal).
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for (i, j) in self.positions() {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
        }
        adj
    }
}

/// Symmetric sparse matrix; only the lower triangle is stored.
#[derive(Clone, Debug)]
pub struct SparseSymmetric<T> {
    pattern: Arc<SparsePattern>,
    values: Vec<T>,
}

impl<T: Real> SparseSymmetric<T> {
    pub fn zeros(pattern: Arc<SparsePattern>) -> Self {
        let values = vec![T::zero(); pattern.nnz()];
        SparseSymmetric { pattern, values }
    }

    pub fn from_parts(pattern: Arc<SparsePattern>, values: Vec<T>) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(Error::DimensionMismatch { expected: pattern.nnz(), got: values.len() });
        }
        Ok(SparseSymmetric { pattern, values })
    }

    /// Sums duplicate triplets; entries given in the upper triangle are mirrored.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let pattern = SparsePattern::from_entries(n, triplets.iter().map(|&(i, j, _)| (i, j)))?;
        let mut m = SparseSymmetric::zeros(Arc::new(pattern));
        for &(i, j, v) in triplets {
            m.add(i, j, v)?;
        }
        Ok(m)
    }

    pub fn identity(n: usize) -> Result<Self> {
        let t: Vec<_> = (0..n).map(|i| (i, i, T::one())).collect();
        Self::from_triplets(n, &t)
    }

    pub fn from_diagonal(d: &[T]) -> Result<Self> {
        let t: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(d.len(), &t)
    }

    pub fn dim(&self) -> usize {
        self.pattern.dim()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn pattern(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.pattern.position(i, j).map_or(T::zero(), |p| self.values[p])
    }

    /// Adds `v` at `(i, j)`; the position must be in the pattern.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) -> Result<()> {
        match self.pattern.position(i, j) {
            Some(p) => {
                self.values[p] += v;
                Ok(())
            }
            None => Err(Error::InvalidArgument(format!("entry ({i}, {j}) is outside the sparsity pattern"))),
        }
    }

    pub fn set_zero(&mut self) {
        self.values.iter_mut().for_each(|v| *v = T::zero());
    }

    pub fn add_diagonal(&mut self, shift: T) -> Result<()> {
        for i in 0..self.dim() {
            self.add(i, i, shift)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// `self += s * other`, where `other`'s pattern is contained in `self`'s.
    pub fn add_scaled(&mut self, s: T, other: &SparseSymmetric<T>) -> Result<()> {
        if Arc::ptr_eq(&self.pattern, &other.pattern) || *self.pattern == *other.pattern {
            for (a, &b) in self.values.iter_mut().zip(&other.values) {
                *a += s * b;
            }
            return Ok(());
        }
        for (i, j, v) in other.iter() {
            self.add(i, j, s * v)?;
        }
        Ok(())
    }

    /// Re-stores the matrix on a larger pattern.
    pub fn with_pattern(&self, pattern: Arc<SparsePattern>) -> Result<Self> {
        let mut m = SparseSymmetric::zeros(pattern);
        m.add_scaled(T::one(), self)?;
        Ok(m)
    }

    /// Lower-triangle triplets `(row, col, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.pattern.positions().zip(self.values.iter()).map(|((i, j), &v)| (i, j, v))
    }

    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>> {
        let n = self.dim();
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: v.len() });
        }
        let mut out = vec![T::zero(); n];
        for (i, j, a) in self.iter() {
            out[i] += a * v[j];
            if i != j {
                out[j] += a * v[i];
            }
        }
        Ok(out)
    }

    /// `vᵀ A v` over stored entries, off-diagonals counted twice.
    pub fn quad_form(&self, v: &[T]) -> Result<T> {
        let n = self.dim();
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: v.len() });
        }
        let two = T::from_f64(2.0);
        let mut acc = T::zero();
        for (i, j, a) in self.iter() {
            if i == j {
                acc += a * v[i] * v[i];
            } else {
                acc += two * a * v[i] * v[j];
            }
        }
        Ok(acc)
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let n = self.dim();
        let mut d = vec![vec![T::zero(); n]; n];
        for (i, j, v) in self.iter() {
            d[i][j] = v;
            d[j][i] = v;
        }
        d
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    /// Sum of each full row (both triangles).
    pub fn row_sums(&self) -> Vec<T> {
        let mut s = vec![T::zero(); self.dim()];
        for (i, j, v) in self.iter() {
            s[i] += v;
            if i != j {
                s[j] += v;
            }
        }
        s
    }
}
