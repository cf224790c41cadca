use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::sparse::{cholesky, Ordering, SparseSymmetric};

use super::outer::LaplaceResult;

/// Draws from `N(mean, P⁻¹)` via `x = mean + L⁻ᵀ z`.
pub fn sample_gaussian(precision: &SparseSymmetric<f64>, mean: &[f64], n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if mean.len() != precision.dim() {
        return Err(Error::DimensionMismatch { expected: precision.dim(), got: mean.len() });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let factor = cholesky(precision, Ordering::MinimumDegree)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..mean.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let d = factor.solve_lt(&z)?;
            Ok(mean.iter().zip(d).map(|(m, v)| m + v).collect())
        })
        .collect()
}

/// Joint posterior draws `(x, θ)` around the fitted mode.
pub fn sample_posterior(result: &LaplaceResult, n: usize, seed: u64) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let p = result
        .joint_precision
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("fit was run without a joint precision".into()))?;
    let mean: Vec<f64> = result.x_hat.iter().chain(&result.theta_hat).cloned().collect();
    let l = result.x_hat.len();
    Ok(sample_gaussian(p, &mean, n, seed)?
        .into_iter()
        .map(|mut d| {
            let theta = d.split_off(l);
            (d, theta)
        })
        .collect())
}
