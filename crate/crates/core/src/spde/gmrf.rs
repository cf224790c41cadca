use crate::error::{Error, Result};
use crate::sparse::{cholesky, CholeskyFactor, Ordering, SparseSymmetric};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Gaussian Markov random field with a factored precision.
#[derive(Clone, Debug)]
pub struct Gmrf {
    q: SparseSymmetric<f64>,
    factor: CholeskyFactor<f64>,
}

impl Gmrf {
    pub fn new(q: SparseSymmetric<f64>) -> Result<Self> {
        let factor = cholesky(&q, Ordering::MinimumDegree)?;
        Ok(Gmrf { q, factor })
    }

    pub fn precision(&self) -> &SparseSymmetric<f64> {
        &self.q
    }

    pub fn factor(&self) -> &CholeskyFactor<f64> {
        &self.factor
    }

    pub fn log_determinant(&self) -> f64 {
        self.factor.log_determinant()
    }

    pub fn logdensity(&self, x: &[f64], mu: &[f64]) -> Result<f64> {
        let l = self.q.dim();
        if x.len() != l || mu.len() != l {
            return Err(Error::DimensionMismatch { expected: l, got: x.len().min(mu.len()) });
        }
        let r: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
        let quad = self.q.quad_form(&r)?;
        Ok(-0.5 * l as f64 * LN_2PI + 0.5 * self.log_determinant() - 0.5 * quad)
    }
}

/// `−(l/2) log 2π + ½ log|Q| − ½ (x − μ)ᵀ Q (x − μ)`.
pub fn gmrf_logdensity(x: &[f64], mu: &[f64], q: &SparseSymmetric<f64>) -> Result<f64> {
    Gmrf::new(q.clone())?.logdensity(x, mu)
}
