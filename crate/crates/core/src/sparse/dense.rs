//! Small dense helpers for systems that are too small to bother with sparsity.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// LU factorization with partial pivoting of a square row-major matrix.
#[derive(Clone, Debug)]
pub struct DenseLu<T> {
    n: usize,
    lu: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Real> DenseLu<T> {
    pub fn factor(a: &[Vec<T>]) -> Result<Self> {
        let n = a.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty matrix".into()));
        }
        let mut lu = Vec::with_capacity(n * n);
        for row in a {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: row.len() });
            }
            lu.extend_from_slice(row);
        }
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[k * n + k].abs();
            for i in (k + 1)..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == T::zero() || !best.is_finite() {
                return Err(Error::InvalidArgument(format!("singular matrix at column {k}")));
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                piv.swap(k, p);
            }
            let d = lu[k * n + k];
            for i in (k + 1)..n {
                let f = lu[i * n + k] / d;
                lu[i * n + k] = f;
                for j in (k + 1)..n {
                    let u = lu[k * n + j];
                    lu[i * n + j] -= f * u;
                }
            }
        }
        Ok(DenseLu { n, lu, piv })
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: b.len() });
        }
        let mut y: Vec<T> = self.piv.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            for j in 0..i {
                let l = self.lu[i * n + j];
                let yj = y[j];
                y[i] -= l * yj;
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                let u = self.lu[i * n + j];
                let yj = y[j];
                y[i] -= u * yj;
            }
            y[i] /= self.lu[i * n + i];
        }
        Ok(y)
    }

    /// Ratio of smallest to largest pivot magnitude; a cheap singularity indicator.
    pub fn pivot_ratio(&self) -> f64 {
        let d: Vec<f64> = (0..self.n).map(|i| self.lu[i * self.n + i].value().abs()).collect();
        let max = d.iter().cloned().fold(0.0, f64::max);
        let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
        if max == 0.0 {
            0.0
        } else {
            min / max
        }
    }
}

/// Row-major dense product `a · b`.
pub fn matmul<T: Real>(a: &[Vec<T>], b: &[Vec<T>]) -> Vec<Vec<T>> {
    let m = b.first().map_or(0, |r| r.len());
    a.iter()
        .map(|row| {
            let mut out = vec![T::zero(); m];
            for (k, &aik) in row.iter().enumerate() {
                for (o, &bkj) in out.iter_mut().zip(&b[k]) {
                    *o += aik * bkj;
                }
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_with_pivoting() {
        let a = vec![vec![0.0, 2.0, 1.0], vec![1.0, 1.0, 0.0], vec![3.0, 0.0, 1.0]];
        let lu = DenseLu::factor(&a).unwrap();
        let x = lu.solve(&[3.0, 2.0, 4.0]).unwrap();
        for (row, b) in a.iter().zip([3.0, 2.0, 4.0]) {
            let r: f64 = row.iter().zip(&x).map(|(p, q)| p * q).sum();
            assert!((r - b).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_is_reported() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(DenseLu::factor(&a).is_err());
    }
}
