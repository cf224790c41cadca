use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sparse::{SparsePattern, SparseSymmetric};

use super::fem::FemMatrices;

/// Parameters of the SPDE precision with `α = 2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionSpec {
    pub tau: f64,
    pub kappa: f64,
    /// Oscillation parameter in `(0, 1)`; `None` gives the Matérn operator.
    pub omega: Option<f64>,
}

impl PrecisionSpec {
    pub fn matern(tau: f64, kappa: f64) -> Self {
        PrecisionSpec { tau, kappa, omega: None }
    }

    pub fn oscillating(tau: f64, kappa: f64, omega: f64) -> Self {
        PrecisionSpec { tau, kappa, omega: Some(omega) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !(self.kappa > 0.0) || !self.tau.is_finite() || !self.kappa.is_finite() {
            return Err(Error::InvalidArgument("tau and kappa must be positive and finite".into()));
        }
        if let Some(w) = self.omega {
            if !(w > 0.0 && w < 1.0) {
                return Err(Error::InvalidArgument("omega must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }

    /// `cos(π ω)`, or 1 when no oscillation is present.
    pub fn cos_pi_omega(&self) -> f64 {
        self.omega.map_or(1.0, |w| (std::f64::consts::PI * w).cos())
    }
}

/// The three matrices `C̃`, `G` and `G C̃⁻¹ G` stored on one common pattern,
/// so a precision is a cheap linear combination of their values.
#[derive(Clone, Debug)]
pub struct SpdeOperator {
    pattern: Arc<SparsePattern>,
    c: Vec<f64>,
    g: Vec<f64>,
    gcg: Vec<f64>,
}

impl SpdeOperator {
    pub fn new(fem: &FemMatrices) -> Result<Self> {
        let l = fem.dim();
        if fem.c_lumped.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::DegenerateMesh("lumped mass must be positive".into()));
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); l];
        for (i, j, v) in fem.g.iter() {
            rows[i].push((j, v));
            if i != j {
                rows[j].push((i, v));
            }
        }
        let mut gcg = Vec::new();
        for (k, row) in rows.iter().enumerate() {
            let dk = fem.c_lumped[k];
            for &(i, gi) in row {
                for &(j, gj) in row {
                    if j <= i {
                        gcg.push((i, j, gi * gj / dk));
                    }
                }
            }
        }
        let gcg = SparseSymmetric::from_triplets(l, &gcg)?;
        let pattern = Arc::new(
            gcg.pattern()
                .union(fem.g.pattern())?
                .union(&SparsePattern::from_entries_with_diagonal(l, std::iter::empty())?)?,
        );
        let c = SparseSymmetric::from_diagonal(&fem.c_lumped)?.with_pattern(pattern.clone())?;
        let g = fem.g.with_pattern(pattern.clone())?;
        let gcg = gcg.with_pattern(pattern.clone())?;
        Ok(SpdeOperator { pattern, c: c.values().to_vec(), g: g.values().to_vec(), gcg: gcg.values().to_vec() })
    }

    pub fn pattern(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    pub fn dim(&self) -> usize {
        self.pattern.dim()
    }

    /// `τ² (κ⁴ C̃ + 2 cos(πω) κ² G + G C̃⁻¹ G)`.
    pub fn precision_with<T: Real>(&self, tau: T, kappa: T, cos_pi_omega: T) -> SparseSymmetric<T> {
        let t2 = tau * tau;
        let k2 = kappa * kappa;
        let a = t2 * k2 * k2;
        let b = t2 * T::from_f64(2.0) * cos_pi_omega * k2;
        let values = (0..self.c.len())
            .map(|p| a * T::from_f64(self.c[p]) + b * T::from_f64(self.g[p]) + t2 * T::from_f64(self.gcg[p]))
            .collect();
        SparseSymmetric::from_parts(self.pattern.clone(), values).expect("values match pattern")
    }

    pub fn precision(&self, spec: &PrecisionSpec) -> Result<SparseSymmetric<f64>> {
        spec.validate()?;
        Ok(self.precision_with(spec.tau, spec.kappa, spec.cos_pi_omega()))
    }
}

pub fn build_precision(fem: &FemMatrices, spec: &PrecisionSpec) -> Result<SparseSymmetric<f64>> {
    SpdeOperator::new(fem)?.precision(spec)
}
