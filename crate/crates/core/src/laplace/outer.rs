use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{CholeskyFactor, SparsePattern, SparseSymmetric};

use super::inner::{InnerOptions, Laplace};
use super::joint::JointNll;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub inner: InnerOptions,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub rel_tol: f64,
    /// Central-difference step on the working scale.
    pub fd_step: f64,
    /// Largest allowed ∞-norm of one quasi-Newton step.
    pub max_step: f64,
    /// Optional box constraints on the working scale.
    pub bounds: Option<Vec<(f64, f64)>>,
    /// Also assemble the joint precision of `(x, θ)` at the optimum.
    pub joint_precision: bool,
    /// Step for the finite-difference Hessian of the Laplace NLL.
    pub hessian_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            inner: InnerOptions::default(),
            max_iter: 300,
            grad_tol: 1e-5,
            rel_tol: 1e-10,
            fd_step: 1e-5,
            max_step: 3.0,
            bounds: None,
            joint_precision: true,
            hessian_step: 1e-3,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub outer_iterations: usize,
    pub objective_evaluations: usize,
    pub inner_iterations: usize,
    pub outer_grad_norm: f64,
    pub inner_grad_norm: f64,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct LaplaceResult {
    /// Working-scale estimate.
    pub theta_hat: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub nll: f64,
    pub gradient: Vec<f64>,
    /// Precision of `(x, θ)`; `x` occupies the first `l` indices.
    pub joint_precision: Option<SparseSymmetric<f64>>,
    pub diagnostics: FitDiagnostics,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

struct Eval {
    f: f64,
    x: Vec<f64>,
    factor: CholeskyFactor<f64>,
    inner_iterations: usize,
}

impl<'a, G: JointNll + ?Sized> Laplace<'a, G> {
    fn eval(&self, theta: &[f64], warm: &[f64]) -> Result<Eval> {
        let (f, r) = self.nll(theta, warm)?;
        Ok(Eval { f, x: r.x_hat, factor: r.factor, inner_iterations: r.iterations })
    }

    fn clamp(&self, theta: &mut [f64], opts: &FitOptions) {
        if let Some(b) = &opts.bounds {
            for (t, &(lo, hi)) in theta.iter_mut().zip(b) {
                *t = t.clamp(lo, hi);
            }
        }
    }

    /// Central-difference gradient of the Laplace NLL; each probe warm-starts
    /// from the same mode, so the result does not depend on scheduling.
    pub fn outer_gradient(&self, theta: &[f64], warm: &[f64], h: f64) -> Result<Vec<f64>> {
        let (_, center) = self.nll(theta, warm)?;
        self.outer_gradient_at(theta, &center.x_hat, &center.factor, h)
    }

    /// As [`Self::outer_gradient`], from a converged mode `x_hat` with the
    /// factor of its Hessian. Probes start at `x̂ ± h ∂x̂/∂θᵢ`, where the
    /// sensitivity is `−H⁻¹ ∂(∇ₓg)/∂θᵢ` by differences.
    fn outer_gradient_at(
        &self,
        theta: &[f64],
        x_hat: &[f64],
        factor: &CholeskyFactor<f64>,
        h: f64,
    ) -> Result<Vec<f64>> {
        let p = theta.len();
        let g = self.joint();
        let starts: Vec<Vec<f64>> = (0..p)
            .into_par_iter()
            .map(|i| {
                let grad_at = |s: f64| -> Result<Vec<f64>> {
                    let mut t = theta.to_vec();
                    t[i] += s;
                    g.gradient(x_hat, &t)
                };
                match (grad_at(h), grad_at(-h)) {
                    (Ok(a), Ok(b)) => {
                        let cross: Vec<f64> = a.iter().zip(&b).map(|(u, v)| (u - v) / 2.0).collect();
                        match factor.solve(&cross) {
                            Ok(dx) if dx.iter().all(|v| v.is_finite()) => dx,
                            _ => vec![0.0; x_hat.len()],
                        }
                    }
                    _ => vec![0.0; x_hat.len()],
                }
            })
            .collect();
        let probes: Vec<Result<f64>> = (0..2 * p)
            .into_par_iter()
            .map(|q| {
                let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
                let mut t = theta.to_vec();
                t[q / 2] += sign * h;
                let x0: Vec<f64> = x_hat.iter().zip(&starts[q / 2]).map(|(x, d)| x - sign * d).collect();
                self.nll(&t, &x0).or_else(|_| self.nll(&t, x_hat)).map(|(f, _)| f)
            })
            .collect();
        let mut out = vec![0.0; p];
        let needs_center = probes.iter().any(|r| r.is_err());
        let center = if needs_center { Some(self.nll(theta, x_hat)?.0) } else { None };
        for i in 0..p {
            out[i] = match (&probes[2 * i], &probes[2 * i + 1]) {
                (Ok(a), Ok(b)) => (a - b) / (2.0 * h),
                (Ok(a), Err(_)) => (a - center.unwrap()) / h,
                (Err(_), Ok(b)) => (center.unwrap() - b) / h,
                (Err(e), Err(_)) => return Err(e.clone()),
            };
        }
        Ok(out)
    }

    /// Central-difference Hessian of the Laplace NLL on the working scale.
    pub fn outer_hessian(&self, theta: &[f64], warm: &[f64], h: f64) -> Result<Vec<Vec<f64>>> {
        let p = theta.len();
        let f0 = self.nll(theta, warm)?.0;
        let pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| (0..=i).map(move |j| (i, j))).collect();
        let vals: Vec<Result<f64>> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let at = |a: f64, b: f64| -> Result<f64> {
                    let mut t = theta.to_vec();
                    t[i] += a;
                    t[j] += b;
                    self.nll(&t, warm).map(|(f, _)| f)
                };
                if i == j {
                    Ok((at(h, 0.0)? - 2.0 * f0 + at(-h, 0.0)?) / (h * h))
                } else {
                    Ok((at(h, h)? - at(h, -h)? - at(-h, h)? + at(-h, -h)?) / (4.0 * h * h))
                }
            })
            .collect();
        let mut out = vec![vec![0.0; p]; p];
        for (&(i, j), v) in pairs.iter().zip(vals) {
            let v = v?;
            out[i][j] = v;
            out[j][i] = v;
        }
        Ok(out)
    }

    /// Quasi-Newton minimization of the Laplace NLL over `θ`.
    pub fn fit(&self, theta0: &[f64], opts: &FitOptions) -> Result<LaplaceResult> {
        let p = self.joint().param_dim();
        let l = self.joint().latent_dim();
        if theta0.len() != p {
            return Err(Error::DimensionMismatch { expected: p, got: theta0.len() });
        }
        if theta0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("initial parameters must be finite".into()));
        }
        let laplace = Laplace::new(self.joint()).with_inner(opts.inner);
        let this = if self.inner == opts.inner { self } else { &laplace };

        let mut theta = theta0.to_vec();
        this.clamp(&mut theta, opts);
        let mut cur = this.eval(&theta, &vec![0.0; l])?;
        let mut evaluations = 1;
        let mut inner_total = cur.inner_iterations;
        let mut grad = this.outer_gradient_at(&theta, &cur.x, &cur.factor, opts.fd_step)?;
        evaluations += 2 * p;
        let mut hinv: Vec<Vec<f64>> =
            (0..p).map(|i| (0..p).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let mut first = true;
        let mut converged = false;
        let mut message = String::from("iteration limit reached");
        let mut iter = 0;
        while iter < opts.max_iter {
            if inf_norm(&grad) <= opts.grad_tol {
                converged = true;
                message = "gradient tolerance reached".into();
                break;
            }
            iter += 1;
            let mut dir: Vec<f64> = (0..p).map(|i| -(0..p).map(|j| hinv[i][j] * grad[j]).sum::<f64>()).collect();
            let mut slope: f64 = dir.iter().zip(&grad).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                for (i, row) in hinv.iter_mut().enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = if i == j { 1.0 } else { 0.0 };
                    }
                }
                dir = grad.iter().map(|g| -g).collect();
                slope = -grad.iter().map(|g| g * g).sum::<f64>();
                first = true;
            }
            let dn = inf_norm(&dir);
            if dn > opts.max_step {
                for d in dir.iter_mut() {
                    *d *= opts.max_step / dn;
                }
                slope *= opts.max_step / dn;
            }

            let mut t = 1.0;
            let mut next: Option<(Vec<f64>, Eval)> = None;
            for _ in 0..40 {
                let mut trial: Vec<f64> = theta.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
                this.clamp(&mut trial, opts);
                evaluations += 1;
                if let Ok(e) = this.eval(&trial, &cur.x) {
                    if e.f <= cur.f + 1e-4 * t * slope {
                        inner_total += e.inner_iterations;
                        next = Some((trial, e));
                        break;
                    }
                }
                t *= 0.5;
            }
            let Some((new_theta, new_eval)) = next else {
                converged = inf_norm(&grad) <= 1e2 * opts.grad_tol;
                message = "line search failed".into();
                break;
            };
            let new_grad = this.outer_gradient_at(&new_theta, &new_eval.x, &new_eval.factor, opts.fd_step)?;
            evaluations += 2 * p;
            let s: Vec<f64> = new_theta.iter().zip(&theta).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
            let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rel = (cur.f - new_eval.f).abs() / cur.f.abs().max(1.0);
            theta = new_theta;
            cur = new_eval;
            grad = new_grad;
            if sy > 1e-12 * s.iter().map(|v| v * v).sum::<f64>().sqrt() * y.iter().map(|v| v * v).sum::<f64>().sqrt() {
                if first {
                    let yy: f64 = y.iter().map(|v| v * v).sum();
                    let gamma = sy / yy;
                    for (i, row) in hinv.iter_mut().enumerate() {
                        for (j, v) in row.iter_mut().enumerate() {
                            *v = if i == j { gamma } else { 0.0 };
                        }
                    }
                    first = false;
                }
                let rho = 1.0 / sy;
                let hy: Vec<f64> = (0..p).map(|i| (0..p).map(|j| hinv[i][j] * y[j]).sum()).collect();
                let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
                for i in 0..p {
                    for j in 0..p {
                        hinv[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                    }
                }
            }
            if rel <= opts.rel_tol {
                converged = true;
                message = "relative objective change below tolerance".into();
                break;
            }
        }
        if converged && inf_norm(&grad) <= opts.grad_tol {
            message = "gradient tolerance reached".into();
        }

        let (_, inner) = this.nll(&theta, &cur.x)?;
        let joint_precision = if opts.joint_precision {
            Some(this.joint_precision(&theta, &inner.x_hat, &inner.hessian, opts)?)
        } else {
            None
        };
        Ok(LaplaceResult {
            nll: cur.f,
            x_hat: inner.x_hat,
            gradient: grad.clone(),
            joint_precision,
            diagnostics: FitDiagnostics {
                converged,
                outer_iterations: iter,
                objective_evaluations: evaluations,
                inner_iterations: inner_total,
                outer_grad_norm: inf_norm(&grad),
                inner_grad_norm: inner.grad_norm,
                message,
            },
            theta_hat: theta,
        })
    }

    /// `[[H_xx, B], [Bᵀ, D]]` with `B = ∂²g/∂x∂θ` by differences of `∇ₓg` and
    /// `D = H_L + Bᵀ H_xx⁻¹ B`, so the `θ` block of the inverse equals the
    /// inverse of the Laplace-NLL Hessian `H_L`.
    pub fn joint_precision(
        &self,
        theta: &[f64],
        x_hat: &[f64],
        h_xx: &SparseSymmetric<f64>,
        opts: &FitOptions,
    ) -> Result<SparseSymmetric<f64>> {
        let g = self.joint();
        let l = g.latent_dim();
        let p = g.param_dim();
        let h = opts.fd_step;
        let cols: Vec<Result<Vec<f64>>> = (0..p)
            .into_par_iter()
            .map(|k| {
                let mut tp = theta.to_vec();
                let mut tm = theta.to_vec();
                tp[k] += h;
                tm[k] -= h;
                let gp = g.gradient(x_hat, &tp)?;
                let gm = g.gradient(x_hat, &tm)?;
                Ok(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect())
            })
            .collect();
        let b: Vec<Vec<f64>> = cols.into_iter().collect::<Result<_>>()?;
        let h_l = self.outer_hessian(theta, x_hat, opts.hessian_step)?;
        let factor = self.factor(h_xx)?;
        let hinv_b: Vec<Vec<f64>> = b.iter().map(|col| factor.solve(col)).collect::<Result<_>>()?;
        let mut triplets: Vec<(usize, usize, f64)> = h_xx.iter().collect();
        for k in 0..p {
            for (i, &v) in b[k].iter().enumerate() {
                if v != 0.0 {
                    triplets.push((l + k, i, v));
                }
            }
            for j in 0..=k {
                let cross: f64 = b[k].iter().zip(&hinv_b[j]).map(|(a, c)| a * c).sum();
                triplets.push((l + k, l + j, h_l[k][j] + cross));
            }
        }
        let entries = triplets.iter().map(|&(i, j, _)| (i, j));
        let pattern = Arc::new(SparsePattern::from_entries_with_diagonal(l + p, entries)?);
        let mut out = SparseSymmetric::zeros(pattern);
        for (i, j, v) in triplets {
            out.add(i, j, v)?;
        }
        Ok(out)
    }
}

pub fn fit<G: JointNll + ?Sized>(g: &G, theta0: &[f64], opts: &FitOptions) -> Result<LaplaceResult> {
    Laplace::new(g).with_inner(opts.inner).fit(theta0, opts)
}
