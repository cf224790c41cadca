use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::symmetric::{SparsePattern, SparseSymmetric};

/// Symmetric band matrix. Row `i` stores `A(i, i - d)` for `d = 0..=half_bandwidth`.
#[derive(Clone, Debug)]
pub struct BandedSymmetric<T> {
    n: usize,
    hb: usize,
    bands: Vec<T>,
}

impl<T: Real> BandedSymmetric<T> {
    pub fn zeros(n: usize, half_bandwidth: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("matrix dimension must be positive".into()));
        }
        Ok(BandedSymmetric { n, hb: half_bandwidth, bands: vec![T::zero(); n * (half_bandwidth + 1)] })
    }

    pub fn from_sparse(a: &SparseSymmetric<T>) -> Result<Self> {
        let hb = a.pattern().half_bandwidth();
        let mut b = Self::zeros(a.dim(), hb)?;
        for (i, j, v) in a.iter() {
            b.set(i, j, v)?;
        }
        Ok(b)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.hb
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> Option<usize> {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let d = r - c;
        (d <= self.hb && r < self.n).then(|| r * (self.hb + 1) + d)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.offset(i, j).map_or(T::zero(), |o| self.bands[o])
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) -> Result<()> {
        let o = self
            .offset(i, j)
            .ok_or_else(|| Error::InvalidArgument(format!("entry ({i}, {j}) lies outside the band")))?;
        self.bands[o] = v;
        Ok(())
    }

    pub fn add(&mut self, i: usize, j: usize, v: T) -> Result<()> {
        let cur = self.get(i, j);
        self.set(i, j, cur + v)
    }

    pub fn to_sparse(&self) -> Result<SparseSymmetric<T>> {
        let pattern = Arc::new(SparsePattern::banded(self.n, self.hb));
        let mut m = SparseSymmetric::zeros(pattern);
        for i in 0..self.n {
            for d in 0..=self.hb.min(i) {
                m.add(i, i - d, self.bands[i * (self.hb + 1) + d])?;
            }
        }
        Ok(m)
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::zero(); self.n]; self.n];
        for i in 0..self.n {
            for d in 0..=self.hb.min(i) {
                let v = self.bands[i * (self.hb + 1) + d];
                out[i][i - d] = v;
                out[i - d][i] = v;
            }
        }
        out
    }
}

/// Band Cholesky factor `A = L Lᵀ`; `L` has the bandwidth of `A`.
#[derive(Clone, Debug)]
pub struct BandedCholesky<T> {
    l: BandedSymmetric<T>,
    log_det: T,
}

impl<T: Real> BandedCholesky<T> {
    pub fn factor(a: &BandedSymmetric<T>) -> Result<Self> {
        let n = a.n;
        let hb = a.hb;
        let w = hb + 1;
        let mut l = a.clone();
        let mut log_det = T::zero();
        for j in 0..n {
            let k0 = j.saturating_sub(hb);
            let mut d = l.bands[j * w];
            for k in k0..j {
                let ljk = l.bands[j * w + (j - k)];
                d -= ljk * ljk;
            }
            if !(d.value() > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { column: j, pivot: d.value() });
            }
            let ljj = d.sqrt();
            l.bands[j * w] = ljj;
            log_det += ljj.ln();
            for i in (j + 1)..n.min(j + hb + 1) {
                let k0 = i.saturating_sub(hb);
                let mut s = l.bands[i * w + (i - j)];
                for k in k0..j {
                    s -= l.bands[i * w + (i - k)] * l.bands[j * w + (j - k)];
                }
                l.bands[i * w + (i - j)] = s / ljj;
            }
        }
        Ok(BandedCholesky { l, log_det: log_det + log_det })
    }

    pub fn dim(&self) -> usize {
        self.l.n
    }

    pub fn log_determinant(&self) -> T {
        self.log_det
    }

    pub fn half_bandwidth(&self) -> usize {
        self.l.hb
    }

    /// Entry `L(i, j)` of the lower factor.
    pub fn lower(&self, i: usize, j: usize) -> T {
        if j > i {
            T::zero()
        } else {
            self.l.get(i, j)
        }
    }

    pub(crate) fn solve_lower_in_place(&self, y: &mut [T]) {
        let (n, hb, w) = (self.l.n, self.l.hb, self.l.hb + 1);
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(hb)..i {
                s -= self.l.bands[i * w + (i - k)] * y[k];
            }
            y[i] = s / self.l.bands[i * w];
        }
    }

    pub(crate) fn solve_upper_in_place(&self, y: &mut [T]) {
        let (n, hb, w) = (self.l.n, self.l.hb, self.l.hb + 1);
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n.min(i + hb + 1) {
                s -= self.l.bands[k * w + (k - i)] * y[k];
            }
            y[i] = s / self.l.bands[i * w];
        }
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: b.len() });
        }
        let mut y = b.to_vec();
        self.solve_lower_in_place(&mut y);
        self.solve_upper_in_place(&mut y);
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_factor_keeps_band() {
        let mut a = BandedSymmetric::<f64>::zeros(6, 1).unwrap();
        for i in 0..6 {
            a.set(i, i, 4.0).unwrap();
            if i > 0 {
                a.set(i, i - 1, -1.0).unwrap();
            }
        }
        let f = BandedCholesky::factor(&a).unwrap();
        assert_eq!(f.half_bandwidth(), 1);
        let x = f.solve(&[1.0; 6]).unwrap();
        let dense = a.to_dense();
        for i in 0..6 {
            let r: f64 = (0..6).map(|j| dense[i][j] * x[j]).sum();
            assert!((r - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn set_outside_band_fails() {
        let mut a = BandedSymmetric::<f64>::zeros(4, 1).unwrap();
        assert!(a.set(3, 0, 1.0).is_err());
    }

    #[test]
    fn indefinite_band_reports_pivot() {
        let mut a = BandedSymmetric::<f64>::zeros(2, 1).unwrap();
        a.set(0, 0, 1.0).unwrap();
        a.set(1, 1, 1.0).unwrap();
        a.set(1, 0, 2.0).unwrap();
        assert!(matches!(BandedCholesky::factor(&a), Err(Error::NotPositiveDefinite { column: 1, .. })));
    }
}
