use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{CholeskyFactor, SparseCholesky, SparseSymmetric, SymbolicCholesky};

use super::joint::JointNll;

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerOptions {
    pub grad_tol: f64,
    pub step_tol: f64,
    pub max_iter: usize,
}

impl Default for InnerOptions {
    fn default() -> Self {
        InnerOptions { grad_tol: 1e-8, step_tol: 1e-10, max_iter: 100 }
    }
}

#[derive(Clone, Debug)]
pub struct InnerResult {
    pub x_hat: Vec<f64>,
    pub hessian: SparseSymmetric<f64>,
    pub factor: CholeskyFactor<f64>,
    pub g_min: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Laplace machinery bound to one joint NLL, caching the symbolic
/// factorization of its Hessian pattern.
pub struct Laplace<'a, G: JointNll + ?Sized> {
    g: &'a G,
    pub inner: InnerOptions,
    symbolic: OnceLock<Arc<SymbolicCholesky>>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

impl<'a, G: JointNll + ?Sized> Laplace<'a, G> {
    pub fn new(g: &'a G) -> Self {
        Laplace { g, inner: InnerOptions::default(), symbolic: OnceLock::new() }
    }

    pub fn with_inner(mut self, inner: InnerOptions) -> Self {
        self.inner = inner;
        self
    }

    pub fn joint(&self) -> &'a G {
        self.g
    }

    fn symbolic(&self) -> Result<Arc<SymbolicCholesky>> {
        if let Some(s) = self.symbolic.get() {
            return Ok(s.clone());
        }
        let s = Arc::new(SymbolicCholesky::analyze(self.g.hessian_pattern(), self.g.ordering())?);
        Ok(self.symbolic.get_or_init(|| s).clone())
    }

    pub(crate) fn factor(&self, h: &SparseSymmetric<f64>) -> Result<SparseCholesky<f64>> {
        SparseCholesky::factor(self.symbolic()?, h)
    }

    fn conform(&self, h: SparseSymmetric<f64>) -> Result<SparseSymmetric<f64>> {
        let sym = self.symbolic()?;
        if h.pattern().as_ref() == sym.pattern().as_ref() {
            Ok(h)
        } else {
            h.with_pattern(sym.pattern().clone())
        }
    }

    /// Damped Newton minimization of `g(·, θ)` from `x0`.
    pub fn inner_mode(&self, theta: &[f64], x0: &[f64]) -> Result<InnerResult> {
        let l = self.g.latent_dim();
        if x0.len() != l {
            return Err(Error::DimensionMismatch { expected: l, got: x0.len() });
        }
        let opts = self.inner;
        let mut x = x0.to_vec();
        let mut ridge = 0.0;
        let mut polish = true;
        let mut finish = false;
        let mut iterations = 0;
        loop {
            let (f, grad, h) = self.g.value_grad_hess(&x, theta, true)?;
            if !f.is_finite() {
                return Err(Error::NonFiniteObjective);
            }
            if grad.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteDerivative);
            }
            let h = self.conform(h.expect("hessian requested"))?;
            let gn = inf_norm(&grad);
            let mut polishing = false;
            if gn <= opts.grad_tol {
                if !polish {
                    finish = true;
                }
                polishing = polish;
                polish = false;
            }
            if finish {
                let factor = self.factor(&h)?;
                return Ok(InnerResult {
                    x_hat: x,
                    hessian: h,
                    factor: CholeskyFactor::Sparse(factor),
                    g_min: f,
                    iterations,
                    grad_norm: gn,
                });
            }
            if iterations >= opts.max_iter && !polishing {
                return Err(Error::MaxIterationsExceeded { iterations });
            }
            if !polishing {
                iterations += 1;
            }

            // Newton direction, adding a ridge until the factorization succeeds
            let scale = h.diagonal().iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let mut try_ridge = 0.0;
            let factor = loop {
                let hd = if try_ridge > 0.0 {
                    let mut hd = h.clone();
                    hd.add_diagonal(try_ridge)?;
                    hd
                } else {
                    h.clone()
                };
                match self.factor(&hd) {
                    Ok(fac) => break fac,
                    Err(Error::NotPositiveDefinite { .. }) => {
                        try_ridge =
                            if try_ridge == 0.0 { f64::max(ridge * 10.0, 1e-8 * scale) } else { try_ridge * 10.0 };
                        if try_ridge > 1e20 * scale {
                            return Err(Error::NotPositiveDefinite { column: 0, pivot: f64::NAN });
                        }
                    }
                    Err(e) => return Err(e),
                }
            };
            ridge = try_ridge;
            let neg: Vec<f64> = grad.iter().map(|v| -v).collect();
            let d = factor.solve(&neg)?;
            let slope: f64 = grad.iter().zip(&d).map(|(a, b)| a * b).sum();

            let mut t = 1.0;
            let mut accepted = false;
            let mut trial = x.clone();
            for _ in 0..60 {
                for i in 0..l {
                    trial[i] = x[i] + t * d[i];
                }
                match self.g.value(&trial, theta) {
                    Ok(ft) if ft.is_finite() && ft <= f + 1e-4 * t * slope.min(0.0) + 1e-12 * f.abs().max(1.0) => {
                        accepted = true;
                        break;
                    }
                    _ => t *= 0.5,
                }
            }
            if !accepted {
                if gn <= 1e3 * opts.grad_tol {
                    finish = true;
                    continue;
                }
                return Err(Error::NonFiniteObjective);
            }
            let step = t * inf_norm(&d);
            x = trial;
            if step <= opts.step_tol {
                finish = true;
            }
        }
    }

    /// `g(x̂) − (l/2) log 2π + ½ log|H|` together with the inner solution.
    pub fn nll(&self, theta: &[f64], x_warm: &[f64]) -> Result<(f64, InnerResult)> {
        let r = self.inner_mode(theta, x_warm)?;
        let l = self.g.latent_dim() as f64;
        let v = r.g_min - 0.5 * l * LN_2PI + 0.5 * r.factor.log_determinant();
        if !v.is_finite() {
            return Err(Error::NonFiniteObjective);
        }
        Ok((v, r))
    }
}

pub fn inner_mode<G: JointNll + ?Sized>(g: &G, theta: &[f64], x0: &[f64]) -> Result<InnerResult> {
    Laplace::new(g).inner_mode(theta, x0)
}

pub fn laplace_nll<G: JointNll + ?Sized>(g: &G, theta: &[f64], x_warm: &[f64]) -> Result<(f64, Vec<f64>)> {
    Laplace::new(g).nll(theta, x_warm).map(|(v, r)| (v, r.x_hat))
}
