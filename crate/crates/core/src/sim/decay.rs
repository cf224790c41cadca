use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{banded_forward, forward_recursion, BandedLikelihoodConfig, LogEmissions, TransitionSeq};

/// Constants of the geometric error bound `T · (M C / m) · ρᵏ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayBoundConfig {
    pub epsilon: f64,
    pub primitivity: usize,
    pub m: f64,
    pub big_m: f64,
    pub c: f64,
}

impl DecayBoundConfig {
    /// Empirical constants: `ε` is the smallest positive entry of any `Γ`,
    /// `l` the index of primitivity of the first matrix, and `m`, `M` the
    /// extreme emission densities over the realized observations.
    pub fn from_model(emit: &LogEmissions<f64>, trans: &TransitionSeq<f64>) -> Result<Self> {
        let n = emit.n_states();
        let mut epsilon = f64::INFINITY;
        for t in 0..emit.len().max(1) {
            for &g in trans.get(t) {
                if g > 0.0 {
                    epsilon = epsilon.min(g);
                }
            }
            if trans.is_homogeneous() {
                break;
            }
        }
        let primitivity = index_of_primitivity(trans.get(0), n)
            .ok_or_else(|| Error::InvalidArgument("transition matrix is not primitive".into()))?;
        let (mut m, mut big_m) = (f64::INFINITY, 0.0f64);
        for &v in emit.data() {
            let d = v.exp();
            m = m.min(d);
            big_m = big_m.max(d);
        }
        if !(m > 0.0) || !big_m.is_finite() {
            return Err(Error::InvalidArgument("emission densities must be bounded away from 0 and ∞".into()));
        }
        Ok(DecayBoundConfig { epsilon, primitivity, m, big_m, c: 2.0 })
    }

    /// `ρ = (1 − (ε m / M)^l)^{1/l}`.
    pub fn rho(&self) -> f64 {
        let l = self.primitivity as f64;
        let base = (self.epsilon * self.m / self.big_m).powf(l);
        ((-base).ln_1p() / l).exp()
    }

    /// `ln` of the bound, which stays finite when the bound itself would overflow.
    pub fn ln_bound(&self, len: usize, k: usize) -> f64 {
        (len as f64).ln()
            + (self.big_m * self.c / self.m).ln()
            + k as f64
                * ((-(self.epsilon * self.m / self.big_m).powf(self.primitivity as f64)).ln_1p()
                    / self.primitivity as f64)
    }

    pub fn bound(&self, len: usize, k: usize) -> f64 {
        self.ln_bound(len, k).exp()
    }
}

/// Smallest `l` with `Γˡ > 0` entrywise, if any.
pub fn index_of_primitivity(gamma: &[f64], n: usize) -> Option<usize> {
    let limit = n * n - 2 * n + 2;
    let pos: Vec<bool> = gamma.iter().map(|&g| g > 0.0).collect();
    let mut cur = pos.clone();
    for l in 1..=limit.max(1) {
        if cur.iter().all(|&b| b) {
            return Some(l);
        }
        let mut next = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                next[i * n + j] = (0..n).any(|k| cur[i * n + k] && pos[k * n + j]);
            }
        }
        cur = next;
    }
    None
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub k: usize,
    pub error: f64,
    pub bound: f64,
}

/// `|exact − banded|` log-likelihood error for each bandwidth, next to the bound.
pub fn verify_decay(
    emit: &LogEmissions<f64>,
    trans: &TransitionSeq<f64>,
    delta: &[f64],
    bandwidths: &[usize],
    bound: &DecayBoundConfig,
) -> Result<Vec<DecayRow>> {
    let exact = forward_recursion(emit, trans, delta)?.loglik;
    let len = emit.len();
    bandwidths
        .iter()
        .map(|&k| {
            let cfg = BandedLikelihoodConfig::new(k, delta.to_vec())?;
            let approx = banded_forward(emit, trans, &cfg)?;
            Ok(DecayRow { k, error: (exact - approx).abs(), bound: bound.bound(len, k) })
        })
        .collect()
}

/// Least-squares slope of `ln error` against `k`, over rows above `floor`.
pub fn log_error_slope(rows: &[DecayRow], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.error > floor).map(|r| (r.k as f64, r.error.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}
