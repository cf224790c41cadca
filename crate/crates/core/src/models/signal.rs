use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hmm::{
    banded_derivatives, banded_forward_segments, chain_to_latent, softmax_rows, ActiveDrivers, BandedLikelihoodConfig,
    Driver, DriverInputs, DriverSensitivity, LogEmissions, StructuralZeros, TransitionSeq,
};
use crate::laplace::{JointNll, Transform};
use crate::scalar::{second_order_2d, Real};
use crate::sparse::{Ordering, SparseCholesky, SparsePattern, SparseSymmetric, SymbolicCholesky};
use crate::spde::{assemble_1d, Mesh1D, SpdeOperator};

use super::densities::{emg_logdensity, normal_logdensity};
use super::transition::{flare_zeros, DECAYING, FIRING, QUIET};
use super::{HmmInputs, HmmModel};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq)]
pub enum SignalEmissions {
    /// `X_t | S_t = j ~ N(m_j, s_j²)` with `m_1 = 0`.
    Gaussian { n_states: usize },
    /// Quiet, firing and decaying states sharing one `σ`.
    Flare,
}

struct Params {
    mu: f64,
    tau: f64,
    kappa: f64,
    cos_pi_omega: f64,
    means: Vec<f64>,
    sds: Vec<f64>,
    sigma: f64,
    lambda: f64,
    r: f64,
    eta: Vec<f64>,
}

/// `Y_t = X_t + u_t`: an HMM-driven latent series `X` observed through a
/// Gaussian process `u` with mean `μ`, whose mesh knots are the observation times.
/// The latent vector is `X` itself.
pub struct SignalPlusFieldModel {
    y: Vec<f64>,
    segments: Vec<Range<usize>>,
    segment_start: Vec<bool>,
    family: SignalEmissions,
    n: usize,
    op: SpdeOperator,
    q_symbolic: Arc<SymbolicCholesky>,
    oscillating: bool,
    cfg: BandedLikelihoodConfig,
    zeros: StructuralZeros,
    free: Vec<(usize, usize)>,
    pattern: Arc<SparsePattern>,
    theta0: Vec<f64>,
}

impl SignalPlusFieldModel {
    pub fn new(
        times: &[f64],
        y: Vec<f64>,
        segments: Vec<Range<usize>>,
        family: SignalEmissions,
        oscillating: bool,
        cfg: BandedLikelihoodConfig,
    ) -> Result<Self> {
        let len = y.len();
        if times.len() != len {
            return Err(Error::DimensionMismatch { expected: len, got: times.len() });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("observations must be finite; split the series at gaps".into()));
        }
        let (n, zeros) = match family {
            SignalEmissions::Gaussian { n_states } if n_states >= 1 => (n_states, StructuralZeros::none(n_states)),
            SignalEmissions::Gaussian { .. } => return Err(Error::InvalidArgument("need at least one state".into())),
            SignalEmissions::Flare => (3, flare_zeros()),
        };
        cfg.validate(n)?;
        let mut segment_start = vec![false; len];
        let mut prev = 0;
        for s in &segments {
            if s.start != prev || s.end <= s.start {
                return Err(Error::InvalidArgument("segments must tile the series in order".into()));
            }
            segment_start[s.start] = true;
            prev = s.end;
        }
        if prev != len {
            return Err(Error::InvalidArgument("segments must cover the whole series".into()));
        }
        let mesh = Mesh1D::new(times.to_vec())?;
        let op = SpdeOperator::new(&assemble_1d(&mesh)?)?;
        let q_symbolic = Arc::new(SymbolicCholesky::analyze(op.pattern().clone(), Ordering::Natural)?);
        let k = cfg.bandwidth;
        let hmm_hb = match family {
            SignalEmissions::Gaussian { .. } => 2 * k - 1,
            SignalEmissions::Flare => 2 * k,
        };
        let hb = hmm_hb.max(op.pattern().half_bandwidth()).min(len.saturating_sub(1));
        let pattern = Arc::new(SparsePattern::banded(len, hb));
        let free: Vec<(usize, usize)> = zeros.free_entries().into_iter().filter(|&(i, j)| i != j).collect();
        let mut model = SignalPlusFieldModel {
            y,
            segments,
            segment_start,
            family,
            n,
            op,
            q_symbolic,
            oscillating,
            cfg,
            zeros,
            free,
            pattern,
            theta0: Vec::new(),
        };
        model.theta0 = vec![0.0; model.param_dim()];
        Ok(model)
    }

    /// Sets the starting point on the working scale.
    pub fn with_initial(mut self, theta0: Vec<f64>) -> Result<Self> {
        if theta0.len() != self.param_dim() {
            return Err(Error::DimensionMismatch { expected: self.param_dim(), got: theta0.len() });
        }
        self.theta0 = theta0;
        Ok(self)
    }

    pub fn family(&self) -> &SignalEmissions {
        &self.family
    }

    pub fn config(&self) -> &BandedLikelihoodConfig {
        &self.cfg
    }

    pub fn observations(&self) -> &[f64] {
        &self.y
    }

    /// Free off-diagonal transition entries, in parameter order.
    pub fn free_transitions(&self) -> &[(usize, usize)] {
        &self.free
    }

    fn emission_dim(&self) -> usize {
        match self.family {
            SignalEmissions::Gaussian { n_states } => 2 * n_states - 1,
            SignalEmissions::Flare => 3,
        }
    }

    fn unpack(&self, theta: &[f64]) -> Result<Params> {
        if theta.len() != self.param_dim() {
            return Err(Error::DimensionMismatch { expected: self.param_dim(), got: theta.len() });
        }
        let tr = self.transforms();
        let nat: Vec<f64> = theta.iter().zip(&tr).map(|(&v, t)| t.to_natural(v)).collect();
        let mut i = 3;
        let cos_pi_omega = if self.oscillating {
            i += 1;
            (std::f64::consts::PI * nat[3]).cos()
        } else {
            1.0
        };
        let mut p = Params {
            mu: nat[0],
            tau: nat[1],
            kappa: nat[2],
            cos_pi_omega,
            means: Vec::new(),
            sds: Vec::new(),
            sigma: 0.0,
            lambda: 0.0,
            r: 0.0,
            eta: vec![0.0; self.n * self.n],
        };
        match self.family {
            SignalEmissions::Gaussian { n_states } => {
                p.means = std::iter::once(0.0).chain(nat[i..i + n_states - 1].iter().cloned()).collect();
                p.sds = nat[i + n_states - 1..i + 2 * n_states - 1].to_vec();
            }
            SignalEmissions::Flare => {
                p.sigma = nat[i];
                p.lambda = nat[i + 1];
                p.r = nat[i + 2];
            }
        }
        i += self.emission_dim();
        for (q, &(a, b)) in self.free.iter().enumerate() {
            p.eta[a * self.n + b] = nat[i + q];
        }
        let bad = |v: f64| !(v > 0.0) || !v.is_finite();
        if bad(p.tau) || bad(p.kappa) || p.sds.iter().any(|&s| bad(s)) {
            return Err(Error::NonFiniteObjective);
        }
        if self.family == SignalEmissions::Flare && (bad(p.sigma) || bad(p.lambda)) {
            return Err(Error::NonFiniteObjective);
        }
        Ok(p)
    }

    fn log_emission<T: Real>(&self, p: &Params, j: usize, prev: T, x: T) -> T {
        let c = T::from_f64;
        match self.family {
            SignalEmissions::Gaussian { .. } => normal_logdensity(x, c(p.means[j]), c(p.sds[j])),
            SignalEmissions::Flare => match j {
                QUIET => normal_logdensity(x, T::zero(), c(p.sigma)),
                FIRING => emg_logdensity(x, prev, c(p.sigma), c(p.lambda)),
                DECAYING => normal_logdensity(x, c(p.r) * prev, c(p.sigma)),
                _ => unreachable!(),
            },
        }
    }

    fn prev(&self, x: &[f64], t: usize) -> f64 {
        if self.segment_start[t] {
            0.0
        } else {
            x[t - 1]
        }
    }

    fn log_emissions(&self, p: &Params, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut le = vec![0.0; x.len() * n];
        for t in 0..x.len() {
            let prev = self.prev(x, t);
            for j in 0..n {
                le[t * n + j] = self.log_emission(p, j, prev, x[t]);
            }
        }
        le
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.y.len() {
            return Err(Error::DimensionMismatch { expected: self.y.len(), got: x.len() });
        }
        Ok(())
    }

    /// `½ rᵀQr − ½ log|Q| + (T/2) log 2π` with `r = y − x − μ`, plus `Q` and `Q r`.
    fn field_terms(&self, p: &Params, x: &[f64]) -> Result<(f64, SparseSymmetric<f64>, Vec<f64>)> {
        let q = self.op.precision_with(p.tau, p.kappa, p.cos_pi_omega);
        let factor = SparseCholesky::factor(self.q_symbolic.clone(), &q)?;
        let r: Vec<f64> = self.y.iter().zip(x).map(|(y, x)| y - x - p.mu).collect();
        let qr = q.matvec(&r)?;
        let quad: f64 = r.iter().zip(&qr).map(|(a, b)| a * b).sum();
        let v = 0.5 * quad - 0.5 * factor.log_determinant() + 0.5 * x.len() as f64 * LN_2PI;
        Ok((v, q, qr))
    }

    fn uses_previous(&self) -> bool {
        self.family == SignalEmissions::Flare
    }
}

impl JointNll for SignalPlusFieldModel {
    fn latent_dim(&self) -> usize {
        self.y.len()
    }

    fn param_dim(&self) -> usize {
        3 + self.oscillating as usize + self.emission_dim() + self.free.len()
    }

    fn value(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        self.check_x(x)?;
        let p = self.unpack(theta)?;
        let le = self.log_emissions(&p, x);
        let emit = LogEmissions::new(self.n, le)?;
        let trans = TransitionSeq::homogeneous(self.n, softmax_rows(&p.eta, &self.zeros)?)?;
        let ll = banded_forward_segments(&emit, &trans, &self.cfg, &self.segments)?;
        let (field, _, _) = self.field_terms(&p, x)?;
        let v = field - ll;
        if !v.is_finite() {
            return Err(Error::NonFiniteObjective);
        }
        Ok(v)
    }

    fn hessian_pattern(&self) -> Arc<SparsePattern> {
        self.pattern.clone()
    }

    fn ordering(&self) -> Ordering {
        Ordering::Natural
    }

    fn transforms(&self) -> Vec<Transform> {
        let mut t = vec![Transform::Identity, Transform::Log, Transform::Log];
        if self.oscillating {
            t.push(Transform::Logit);
        }
        match self.family {
            SignalEmissions::Gaussian { n_states } => {
                t.extend(std::iter::repeat(Transform::Identity).take(n_states - 1));
                t.extend(std::iter::repeat(Transform::Log).take(n_states));
            }
            SignalEmissions::Flare => t.extend([Transform::Log, Transform::Log, Transform::Logit]),
        }
        t.extend(std::iter::repeat(Transform::Identity).take(self.free.len()));
        t
    }

    fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["mu", "tau", "kappa"].iter().map(|s| s.to_string()).collect();
        if self.oscillating {
            names.push("omega".into());
        }
        match self.family {
            SignalEmissions::Gaussian { n_states } => {
                names.extend((2..=n_states).map(|j| format!("mean{j}")));
                names.extend((1..=n_states).map(|j| format!("sd{j}")));
            }
            SignalEmissions::Flare => names.extend(["sigma".to_string(), "lambda".into(), "r".into()]),
        }
        names.extend(self.free.iter().map(|&(i, j)| format!("eta{}{}", i + 1, j + 1)));
        names
    }

    fn gradient(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.value_grad_hess(x, theta, false)?.1)
    }

    fn hessian(&self, x: &[f64], theta: &[f64]) -> Result<SparseSymmetric<f64>> {
        Ok(self.value_grad_hess(x, theta, true)?.2.expect("hessian requested"))
    }

    fn value_grad_hess(
        &self,
        x: &[f64],
        theta: &[f64],
        want_hessian: bool,
    ) -> Result<(f64, Vec<f64>, Option<SparseSymmetric<f64>>)> {
        self.check_x(x)?;
        let p = self.unpack(theta)?;
        let n = self.n;
        let len = x.len();
        let mut le = vec![0.0; len * n];
        let mut d1 = vec![[0.0; 2]; len * n];
        let mut d2 = vec![[0.0; 3]; len * n];
        for t in 0..len {
            let prev = self.prev(x, t);
            for j in 0..n {
                let (g, h, v) = second_order_2d(|a, b| self.log_emission(&p, j, a, b), prev, x[t]);
                le[t * n + j] = v;
                d1[t * n + j] = g;
                d2[t * n + j] = h;
            }
        }
        let inp = DriverInputs { n, le: &le, eta: &p.eta, zeros: &self.zeros };
        let active = ActiveDrivers { le: true, eta: Vec::new() };
        let derivs = banded_derivatives(&inp, &self.cfg, &self.segments, &active, want_hessian)?;
        let (field, q, qr) = self.field_terms(&p, x)?;
        let value = field - derivs.loglik;
        if !value.is_finite() {
            return Err(Error::NonFiniteObjective);
        }
        let coupled = |t: usize| self.uses_previous() && !self.segment_start[t];
        let sensitivity = |d: Driver| {
            let t = d.step;
            let k = t * n + d.slot;
            let [da, db] = d1[k];
            let [daa, dab, dbb] = d2[k];
            let mut s = DriverSensitivity { grad: vec![(t, db)], hess: vec![(t, t, dbb)] };
            if coupled(t) {
                s.grad.push((t - 1, da));
                s.hess.push((t, t - 1, dab));
                s.hess.push((t - 1, t - 1, daa));
            }
            s
        };
        let mut grad: Vec<f64> = qr.iter().map(|v| -v).collect();
        let mut hess = want_hessian.then(|| SparseSymmetric::zeros(self.pattern.clone()));
        chain_to_latent(&derivs, sensitivity, -1.0, &mut grad, hess.as_mut())?;
        if let Some(h) = hess.as_mut() {
            for (i, j, v) in q.iter() {
                h.add(i, j, v)?;
            }
        }
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteDerivative);
        }
        Ok((value, grad, hess))
    }
}

impl HmmModel for SignalPlusFieldModel {
    fn n_states(&self) -> usize {
        self.n
    }

    fn initial_theta(&self) -> Vec<f64> {
        self.theta0.clone()
    }

    fn hmm_inputs(&self, x: &[f64], theta: &[f64]) -> Result<HmmInputs> {
        self.check_x(x)?;
        let p = self.unpack(theta)?;
        Ok(HmmInputs {
            emissions: LogEmissions::new(self.n, self.log_emissions(&p, x))?,
            transitions: TransitionSeq::homogeneous(self.n, softmax_rows(&p.eta, &self.zeros)?)?,
            delta: self.cfg.delta.clone(),
            segments: self.segments.clone(),
        })
    }
}
