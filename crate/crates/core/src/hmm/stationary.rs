use crate::error::{Error, Result};
use crate::sparse::dense::{matmul, DenseLu};

use super::transition::TransitionModel;

const SINGULAR_PIVOT_RATIO: f64 = 1e-13;

fn to_rows(m: &[f64], n: usize) -> Vec<Vec<f64>> {
    m.chunks(n).map(|r| r.to_vec()).collect()
}

/// Solves `δ (I − M + 1 1ᵀ) = 1`, which pins `δ M = δ` together with `Σ δ = 1`.
fn invariant_vector(m: &[Vec<f64>], phase: usize) -> Result<Vec<f64>> {
    let n = m.len();
    let a: Vec<Vec<f64>> =
        (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 } - m[j][i] + 1.0).collect()).collect();
    let lu = DenseLu::factor(&a).map_err(|_| Error::NonErgodicCycle { phase })?;
    if lu.pivot_ratio() < SINGULAR_PIVOT_RATIO {
        return Err(Error::NonErgodicCycle { phase });
    }
    let ones = vec![1.0; n];
    let mut d = lu.solve(&ones)?;
    // one step of iterative refinement
    let r: Vec<f64> = (0..n).map(|i| 1.0 - (0..n).map(|j| a[i][j] * d[j]).sum::<f64>()).collect();
    let corr = lu.solve(&r)?;
    for (x, c) in d.iter_mut().zip(corr) {
        *x += c;
    }
    if d.iter().any(|&v| v < -1e-12) {
        return Err(Error::NonErgodicCycle { phase });
    }
    Ok(d)
}

/// Stationary distribution of a single stochastic matrix.
pub fn stationary_distribution(gamma: &[f64], n: usize) -> Result<Vec<f64>> {
    if gamma.len() != n * n {
        return Err(Error::DimensionMismatch { expected: n * n, got: gamma.len() });
    }
    invariant_vector(&to_rows(gamma, n), 0)
}

/// Row `t` is the invariant distribution of `Γ^{(t+1)} ⋯ Γ^{(t+L)}` (indices mod `L`).
pub fn periodic_stationary(trans: &TransitionModel, period: usize) -> Result<Vec<Vec<f64>>> {
    if period == 0 {
        return Err(Error::InvalidArgument("period must be positive".into()));
    }
    let n = trans.n_states();
    let gammas: Vec<Vec<Vec<f64>>> =
        (0..period).map(|t| trans.gamma(t).map(|g| to_rows(&g, n))).collect::<Result<_>>()?;
    (0..period)
        .map(|t| {
            let mut m = gammas[(t + 1) % period].clone();
            for s in 2..=period {
                m = matmul(&m, &gammas[(t + s) % period]);
            }
            invariant_vector(&m, t)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_closed_form() {
        let d = stationary_distribution(&[0.9, 0.1, 0.3, 0.7], 2).unwrap();
        assert!((d[0] - 0.75).abs() < 1e-15 && (d[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn reducible_chain_is_rejected() {
        let r = stationary_distribution(&[1.0, 0.0, 0.0, 1.0], 2);
        assert!(matches!(r, Err(Error::NonErgodicCycle { .. })));
    }

    #[test]
    fn symmetric_rows_are_uniform() {
        let m = TransitionModel::from_matrix(2, &[0.5, 0.5, 0.5, 0.5]).unwrap();
        for row in periodic_stationary(&m, 5).unwrap() {
            assert!((row[0] - 0.5).abs() < 1e-15);
        }
    }
}
