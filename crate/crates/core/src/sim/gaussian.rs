use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{LogEmissions, TransitionSeq};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Homogeneous HMM with Gaussian emissions, for bandwidth experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianHmm {
    /// Row-major `N × N`.
    pub gamma: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub delta: Vec<f64>,
}

impl GaussianHmm {
    /// Two states with persistence `diag`, unit sds and means `0` and `separation`.
    pub fn two_state(diag: f64, separation: f64) -> Self {
        GaussianHmm {
            gamma: vec![diag, 1.0 - diag, 1.0 - diag, diag],
            means: vec![0.0, separation],
            sds: vec![1.0, 1.0],
            delta: vec![0.5, 0.5],
        }
    }

    pub fn n_states(&self) -> usize {
        self.means.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_states();
        let rows_ok = self.gamma.len() == n * n
            && self.gamma.chunks(n).all(|r| r.iter().all(|&g| g >= 0.0) && (r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let delta_ok = self.delta.len() == n && (self.delta.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        if n == 0 || !rows_ok || !delta_ok || self.sds.len() != n || self.sds.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidProbabilities("rows of gamma and delta must be distributions".into()));
        }
        Ok(())
    }

    fn draw<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (j, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        probs.len() - 1
    }

    /// Observations and 0-based states.
    pub fn simulate(&self, len: usize, seed: u64) -> Result<(Vec<f64>, Vec<usize>)> {
        self.validate()?;
        let n = self.n_states();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut y = Vec::with_capacity(len);
        let mut states = Vec::with_capacity(len);
        let mut s = 0;
        for t in 0..len {
            s = if t == 0 {
                Self::draw(&mut rng, &self.delta)
            } else {
                Self::draw(&mut rng, &self.gamma[s * n..(s + 1) * n])
            };
            let z: f64 = rng.sample(StandardNormal);
            y.push(self.means[s] + self.sds[s] * z);
            states.push(s);
        }
        Ok((y, states))
    }

    pub fn log_emissions(&self, y: &[f64]) -> Result<LogEmissions<f64>> {
        let mut le = Vec::with_capacity(y.len() * self.n_states());
        for &v in y {
            for (m, s) in self.means.iter().zip(&self.sds) {
                let z = (v - m) / s;
                le.push(-0.5 * z * z - s.ln() - LN_SQRT_2PI);
            }
        }
        LogEmissions::new(self.n_states(), le)
    }

    pub fn transitions(&self) -> Result<TransitionSeq<f64>> {
        TransitionSeq::homogeneous(self.n_states(), self.gamma.clone())
    }
}
