//! Exact derivatives of the banded log-likelihood with respect to its per-step
//! inputs ("drivers"): the log emission densities `le_t(j)` and the transition
//! predictors `η_t(i, j)`.
//!
//! Gradients come from a reverse sweep through each forward window. Second
//! derivatives are obtained by differentiating that sweep in forward mode, one
//! seeded driver at a time, which is cheap because every window is short.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{Dual, Real};
use crate::sparse::SparseSymmetric;

use super::banded::{all_windows, check_segments, BandedLikelihoodConfig, Window, WindowInit};
use super::transition::{softmax_rows_backward, softmax_rows_into, StructuralZeros};

/// A single driver: `slot < N` is `le_step(slot)`, otherwise `slot − N`
/// indexes `η_step` row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Driver {
    pub step: usize,
    pub slot: usize,
}

/// Drivers whose second derivatives are required.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ActiveDrivers {
    pub le: bool,
    pub eta: Vec<(usize, usize)>,
}

/// Driver values along the sequence.
#[derive(Clone, Copy, Debug)]
pub struct DriverInputs<'a> {
    pub n: usize,
    /// `len × N` log emission densities.
    pub le: &'a [f64],
    /// Either one `N × N` predictor block or one per step.
    pub eta: &'a [f64],
    pub zeros: &'a StructuralZeros,
}

impl<'a> DriverInputs<'a> {
    pub fn len(&self) -> usize {
        self.le.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.le.is_empty()
    }

    fn homogeneous(&self) -> bool {
        self.eta.len() == self.n * self.n
    }

    fn eta_at(&self, t: usize) -> &'a [f64] {
        let nn = self.n * self.n;
        if self.homogeneous() {
            self.eta
        } else {
            &self.eta[t * nn..(t + 1) * nn]
        }
    }
}

/// Dense Hessian of one window's contribution over its active drivers.
#[derive(Clone, Debug)]
pub struct DriverHessian {
    pub drivers: Vec<Driver>,
    /// Row-major `D × D`.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct HmmDerivatives {
    pub n: usize,
    pub loglik: f64,
    /// `len × N`.
    pub grad_le: Vec<f64>,
    /// `len × N × N`; structural zeros and diagonals are 0.
    pub grad_eta: Vec<f64>,
    pub hessian_blocks: Vec<DriverHessian>,
    pub active: ActiveDrivers,
}

impl HmmDerivatives {
    pub fn gradient(&self, d: Driver) -> f64 {
        let n = self.n;
        if d.slot < n {
            self.grad_le[d.step * n + d.slot]
        } else {
            self.grad_eta[d.step * n * n + d.slot - n]
        }
    }
}

/// Forward and reverse sweep state of one window, reused across reruns.
struct Sweep<T> {
    n: usize,
    phi: Vec<T>,
    a: Vec<T>,
    p: Vec<T>,
    c: Vec<T>,
    mx: Vec<T>,
    grad_le: Vec<T>,
    gamma_bar: Vec<T>,
    phi_bar: Vec<T>,
    a_bar: Vec<T>,
}

impl<T: Real> Sweep<T> {
    fn new(n: usize, w: usize) -> Self {
        Sweep {
            n,
            phi: vec![T::zero(); w * n],
            a: vec![T::zero(); w * n],
            p: vec![T::zero(); w * n],
            c: vec![T::zero(); w],
            mx: vec![T::zero(); w],
            grad_le: vec![T::zero(); w * n],
            gamma_bar: vec![T::zero(); w * n * n],
            phi_bar: vec![T::zero(); n],
            a_bar: vec![T::zero(); n],
        }
    }

    /// Forward pass over local steps `from..`; earlier steps keep their
    /// stored values. `gammas` holds `Γ` for every local step (the first is unused).
    fn forward(&mut self, le: &[T], gammas: &[T], init: &[T], from: usize, first_step: usize) -> Result<()> {
        let n = self.n;
        let nn = n * n;
        let w = le.len() / n;
        for s in from..w {
            let (prev, cur) = self.phi.split_at_mut(s * n);
            let a_s = &mut self.a[s * n..(s + 1) * n];
            if s == 0 {
                a_s.copy_from_slice(init);
            } else {
                super::forward::propagate(&prev[(s - 1) * n..], &gammas[s * nn..(s + 1) * nn], a_s);
            }
            let le_s = &le[s * n..(s + 1) * n];
            let mut mx: Option<T> = None;
            for &l in le_s {
                if l.value() > f64::NEG_INFINITY {
                    mx = Some(mx.map_or(l, |v: T| v.max_of(l)));
                }
            }
            let mx = mx.ok_or(Error::ZeroLikelihoodStep { step: first_step + s })?;
            let mut cs = T::zero();
            for j in 0..n {
                let pj = if le_s[j].value() == f64::NEG_INFINITY { T::zero() } else { (le_s[j] - mx).exp() };
                self.p[s * n + j] = pj;
                let q = a_s[j] * pj;
                cur[j] = q;
                cs += q;
            }
            if !(cs.value() > 0.0) || !cs.is_finite() {
                return Err(Error::ZeroLikelihoodStep { step: first_step + s });
            }
            for v in cur[..n].iter_mut() {
                *v /= cs;
            }
            self.c[s] = cs;
            self.mx[s] = mx;
        }
        Ok(())
    }

    fn loglik(&self, count_from: usize) -> T {
        let mut l = T::zero();
        for s in count_from..self.c.len() {
            l += self.mx[s] + self.c[s].ln();
        }
        l
    }

    /// Reverse pass filling `grad_le` and, if asked, `gamma_bar`.
    fn reverse(&mut self, gammas: &[T], count_from: usize, want_gamma_bar: bool) {
        let n = self.n;
        let nn = n * n;
        let w = self.c.len();
        self.phi_bar.iter_mut().for_each(|v| *v = T::zero());
        for s in (0..w).rev() {
            let phi_s = &self.phi[s * n..(s + 1) * n];
            let mut dot = T::zero();
            for j in 0..n {
                dot += self.phi_bar[j] * phi_s[j];
            }
            let weight = if s >= count_from { T::one() } else { T::zero() };
            for j in 0..n {
                let q_bar = (weight + self.phi_bar[j] - dot) / self.c[s];
                self.grad_le[s * n + j] = q_bar * self.a[s * n + j] * self.p[s * n + j];
                self.a_bar[j] = q_bar * self.p[s * n + j];
            }
            if s == 0 {
                break;
            }
            let g = &gammas[s * nn..(s + 1) * nn];
            let phi_prev = &self.phi[(s - 1) * n..s * n];
            for i in 0..n {
                let mut acc = T::zero();
                for j in 0..n {
                    acc += g[i * n + j] * self.a_bar[j];
                    if want_gamma_bar {
                        self.gamma_bar[s * nn + i * n + j] = phi_prev[i] * self.a_bar[j];
                    }
                }
                self.phi_bar[i] = acc;
            }
        }
    }
}

impl Sweep<Dual<f64>> {
    /// Constant lift of a finished forward pass.
    fn lift(base: &Sweep<f64>) -> Self {
        let up = |v: &[f64]| v.iter().map(|&x| Dual::constant(x)).collect::<Vec<_>>();
        Sweep {
            n: base.n,
            phi: up(&base.phi),
            a: up(&base.a),
            p: up(&base.p),
            c: up(&base.c),
            mx: up(&base.mx),
            grad_le: up(&base.grad_le),
            gamma_bar: up(&base.gamma_bar),
            phi_bar: up(&base.phi_bar),
            a_bar: up(&base.a_bar),
        }
    }
}

struct WindowOutput {
    start: usize,
    loglik: f64,
    grad_le: Vec<f64>,
    grad_eta: Vec<f64>,
    hessian: Option<DriverHessian>,
}

fn window_init<'a>(cfg: &'a BandedLikelihoodConfig, w: &Window) -> &'a [f64] {
    match w.init {
        WindowInit::Delta => &cfg.delta,
        WindowInit::Rho => &cfg.rho,
    }
}

fn process_window(
    inp: &DriverInputs,
    cfg: &BandedLikelihoodConfig,
    w: &Window,
    active: &ActiveDrivers,
    want_hessian: bool,
) -> Result<WindowOutput> {
    let n = inp.n;
    let nn = n * n;
    let len = w.len();
    let cf = w.count_from - w.start;
    let le = &inp.le[w.start * n..w.end * n];
    let mut gammas = vec![0.0; len * nn];
    for s in 1..len {
        softmax_rows_into(inp.eta_at(w.start + s), inp.zeros, &mut gammas[s * nn..(s + 1) * nn])?;
    }
    let init = window_init(cfg, w);
    let mut base = Sweep::new(n, len);
    base.forward(le, &gammas, init, 0, w.start)?;
    let loglik = base.loglik(cf);
    base.reverse(&gammas, cf, true);
    let mut grad_eta = vec![0.0; len * nn];
    for s in 1..len {
        softmax_rows_backward(
            &gammas[s * nn..(s + 1) * nn],
            &base.gamma_bar[s * nn..(s + 1) * nn],
            inp.zeros,
            &mut grad_eta[s * nn..(s + 1) * nn],
        );
    }

    let hessian = if want_hessian {
        // drivers ordered by step; `rows[s]` are those of local step `s`
        let mut drivers = Vec::new();
        let mut rows = Vec::with_capacity(len);
        for s in 0..len {
            let from = drivers.len();
            if active.le {
                drivers.extend((0..n).map(|j| Driver { step: s, slot: j }));
            }
            if s > 0 {
                drivers.extend(active.eta.iter().map(|&(i, j)| Driver { step: s, slot: n + i * n + j }));
            }
            rows.push(from..drivers.len());
        }
        let d = drivers.len();
        let want_eta = !active.eta.is_empty();
        let dual_init: Vec<Dual<f64>> = init.iter().map(|&v| Dual::constant(v)).collect();
        let base_le: Vec<Dual<f64>> = le.iter().map(|&v| Dual::constant(v)).collect();
        let base_gamma: Vec<Dual<f64>> = gammas.iter().map(|&v| Dual::constant(v)).collect();
        let mut sweep = Sweep::lift(&base);
        let mut values = vec![0.0; d * d];
        let mut dle = base_le.clone();
        let mut dgamma = base_gamma.clone();
        let mut eta_local = vec![Dual::constant(0.0); nn];
        let mut eta_bar = vec![Dual::constant(0.0); nn];
        // a driver at step s leaves the forward pass before s untouched, so
        // later steps go first and each rerun overwrites what the previous changed
        for (col, drv) in drivers.iter().enumerate().rev() {
            let s = drv.step;
            if drv.slot < n {
                dle[s * n + drv.slot] = Dual::new(le[s * n + drv.slot], 1.0);
            } else {
                let e = inp.eta_at(w.start + s);
                for (q, v) in eta_local.iter_mut().enumerate() {
                    *v = Dual::constant(e[q]);
                }
                eta_local[drv.slot - n].eps = 1.0;
                softmax_rows_into(&eta_local, inp.zeros, &mut dgamma[s * nn..(s + 1) * nn])?;
            }
            sweep.forward(&dle, &dgamma, &dual_init, s, w.start)?;
            sweep.reverse(&dgamma, cf, want_eta);
            for (t, range) in rows.iter().enumerate() {
                if range.is_empty() {
                    continue;
                }
                if want_eta && t > 0 {
                    softmax_rows_backward(
                        &dgamma[t * nn..(t + 1) * nn],
                        &sweep.gamma_bar[t * nn..(t + 1) * nn],
                        inp.zeros,
                        &mut eta_bar,
                    );
                }
                for row in range.clone() {
                    let slot = drivers[row].slot;
                    values[row * d + col] =
                        if slot < n { sweep.grad_le[t * n + slot].eps } else { eta_bar[slot - n].eps };
                }
            }
            if drv.slot < n {
                dle[s * n + drv.slot] = base_le[s * n + drv.slot];
            } else {
                dgamma[s * nn..(s + 1) * nn].copy_from_slice(&base_gamma[s * nn..(s + 1) * nn]);
            }
        }
        for i in 0..d {
            for j in 0..i {
                let m = 0.5 * (values[i * d + j] + values[j * d + i]);
                values[i * d + j] = m;
                values[j * d + i] = m;
            }
        }
        for drv in drivers.iter_mut() {
            drv.step += w.start;
        }
        Some(DriverHessian { drivers, values })
    } else {
        None
    };
    Ok(WindowOutput { start: w.start, loglik, grad_le: base.grad_le, grad_eta, hessian })
}

/// Banded log-likelihood with its driver gradient and, optionally, the
/// per-window driver Hessians of the active drivers.
pub fn banded_derivatives(
    inp: &DriverInputs,
    cfg: &BandedLikelihoodConfig,
    segments: &[Range<usize>],
    active: &ActiveDrivers,
    want_hessian: bool,
) -> Result<HmmDerivatives> {
    let n = inp.n;
    let nn = n * n;
    if inp.le.len() % n != 0 || !(inp.eta.len() == nn || inp.eta.len() == inp.le.len() * n) {
        return Err(Error::DimensionMismatch { expected: inp.le.len() * n, got: inp.eta.len() });
    }
    cfg.validate(n)?;
    let len = inp.len();
    check_segments(segments, len)?;
    let ws = all_windows(segments, cfg.bandwidth);
    let outs: Vec<Result<WindowOutput>> =
        ws.par_iter().map(|w| process_window(inp, cfg, w, active, want_hessian)).collect();
    let mut loglik = 0.0;
    let mut grad_le = vec![0.0; len * n];
    let mut grad_eta = vec![0.0; len * nn];
    let mut hessian_blocks = Vec::new();
    for o in outs {
        let o = o?;
        loglik += o.loglik;
        for (g, v) in grad_le[o.start * n..].iter_mut().zip(&o.grad_le) {
            *g += v;
        }
        for (g, v) in grad_eta[o.start * nn..].iter_mut().zip(&o.grad_eta) {
            *g += v;
        }
        if let Some(h) = o.hessian {
            hessian_blocks.push(h);
        }
    }
    Ok(HmmDerivatives { n, loglik, grad_le, grad_eta, hessian_blocks, active: active.clone() })
}

/// First and second derivatives of one driver with respect to the latent vector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DriverSensitivity {
    pub grad: Vec<(usize, f64)>,
    /// Lower or upper triangle entries; each unordered pair listed once.
    pub hess: Vec<(usize, usize, f64)>,
}

/// Adds `scale ·` (gradient, Hessian) of the log-likelihood with respect to
/// the latent vector, given each active driver's sensitivity.
pub fn chain_to_latent<F>(
    derivs: &HmmDerivatives,
    sensitivity: F,
    scale: f64,
    grad_x: &mut [f64],
    hess_x: Option<&mut SparseSymmetric<f64>>,
) -> Result<()>
where
    F: Fn(Driver) -> DriverSensitivity,
{
    let n = derivs.n;
    let len = derivs.grad_le.len() / n;
    let want_hess = hess_x.is_some();
    let mut curvature: Vec<(usize, usize, f64)> = Vec::new();
    for t in 0..len {
        let slots = (0..n).filter(|_| derivs.active.le).chain(derivs.active.eta.iter().map(|&(i, j)| n + i * n + j));
        for slot in slots {
            let d = Driver { step: t, slot };
            let g = derivs.gradient(d);
            if g == 0.0 {
                continue;
            }
            let s = sensitivity(d);
            for &(k, v) in &s.grad {
                grad_x[k] += scale * g * v;
            }
            if want_hess {
                curvature.extend(s.hess.iter().map(|&(a, b, v)| (a, b, scale * g * v)));
            }
        }
    }
    let Some(h) = hess_x else { return Ok(()) };
    for (a, b, v) in curvature {
        h.add(a, b, v)?;
    }
    let mut local: Vec<usize> = Vec::new();
    for block in &derivs.hessian_blocks {
        let d = block.drivers.len();
        let jac: Vec<Vec<(usize, f64)>> = block.drivers.iter().map(|&drv| sensitivity(drv).grad).collect();
        local.clear();
        for row in &jac {
            local.extend(row.iter().map(|&(k, _)| k));
        }
        local.sort_unstable();
        local.dedup();
        let x = local.len();
        let pos = |k: usize| local.binary_search(&k).unwrap();
        // H J, then Jᵀ (H J)
        let mut hj = vec![0.0; d * x];
        for (c, row) in jac.iter().enumerate() {
            for &(k, v) in row {
                let b = pos(k);
                for r in 0..d {
                    hj[r * x + b] += block.values[r * d + c] * v;
                }
            }
        }
        let mut m = vec![0.0; x * x];
        for (r, row) in jac.iter().enumerate() {
            for &(k, v) in row {
                let a = pos(k);
                for b in 0..x {
                    m[a * x + b] += v * hj[r * x + b];
                }
            }
        }
        for a in 0..x {
            for b in 0..=a {
                let v = 0.5 * (m[a * x + b] + m[b * x + a]);
                if v != 0.0 {
                    h.add(local[a], local[b], scale * v)?;
                }
            }
        }
    }
    Ok(())
}
