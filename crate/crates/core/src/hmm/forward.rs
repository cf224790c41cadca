use std::ops::Range;

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::transition::TransitionSeq;

/// Per-state log-density evaluators for a fixed observation sequence.
pub trait EmissionModel {
    fn n_states(&self) -> usize;
    fn len(&self) -> usize;
    /// Writes `log f_j(obs_t)` for every state `j` into `out`.
    fn log_densities(&self, t: usize, out: &mut [f64]);

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Precomputed `T × N` matrix of log emission densities.
#[derive(Clone, Debug)]
pub struct LogEmissions<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> LogEmissions<T> {
    pub fn new(n: usize, data: Vec<T>) -> Result<Self> {
        if n == 0 || data.is_empty() || data.len() % n != 0 {
            return Err(Error::DimensionMismatch { expected: n, got: data.len() });
        }
        Ok(LogEmissions { n, data })
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[T] {
        &self.data[t * self.n..(t + 1) * self.n]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }
}

impl LogEmissions<f64> {
    pub fn from_model<E: EmissionModel + ?Sized>(model: &E) -> Result<Self> {
        let n = model.n_states();
        let mut data = vec![0.0; n * model.len()];
        for (t, row) in data.chunks_mut(n).enumerate() {
            model.log_densities(t, row);
        }
        Self::new(n, data)
    }
}

impl EmissionModel for LogEmissions<f64> {
    fn n_states(&self) -> usize {
        self.n
    }

    fn len(&self) -> usize {
        self.data.len() / self.n
    }

    fn log_densities(&self, t: usize, out: &mut [f64]) {
        out.copy_from_slice(self.row(t));
    }
}

/// Scaled forward variable `φ_t` with the accumulated log-likelihood.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledForwardState<T> {
    pub phi: Vec<T>,
    pub loglik: T,
}

pub(crate) fn check_probability_vector(v: &[f64], n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.len() });
    }
    let s: f64 = v.iter().sum();
    if v.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) || (s - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidProbabilities(format!("{what} must be non-negative and sum to 1")));
    }
    Ok(())
}

/// One normalized update: `φ ← a ∘ p / (a ∘ p)·1` with `p = exp(le − max le)`.
/// `a` is `init` at the first step, `φ Γ` afterwards. Returns the log-normalizer.
#[inline]
pub(crate) fn scaled_update<T: Real>(a: &[T], le: &[T], phi: &mut [T], step: usize) -> Result<T> {
    let mut m: Option<T> = None;
    for &l in le {
        if l.value() > f64::NEG_INFINITY {
            m = Some(m.map_or(l, |v: T| v.max_of(l)));
        }
    }
    let m = m.ok_or(Error::ZeroLikelihoodStep { step })?;
    let mut c = T::zero();
    for j in 0..phi.len() {
        let q = if le[j].value() == f64::NEG_INFINITY { T::zero() } else { a[j] * (le[j] - m).exp() };
        phi[j] = q;
        c += q;
    }
    if !(c.value() > 0.0) || !c.is_finite() {
        return Err(Error::ZeroLikelihoodStep { step });
    }
    for p in phi.iter_mut() {
        *p /= c;
    }
    Ok(m + c.ln())
}

#[inline]
pub(crate) fn propagate<T: Real>(phi: &[T], gamma: &[T], out: &mut [T]) {
    let n = phi.len();
    for o in out.iter_mut() {
        *o = T::zero();
    }
    for i in 0..n {
        let pi = phi[i];
        if pi == T::zero() {
            continue;
        }
        let row = &gamma[i * n..(i + 1) * n];
        for j in 0..n {
            out[j] += pi * row[j];
        }
    }
}

/// Runs the scaled recursion over `range`, starting from `init ∘ P(x_start)`,
/// and sums log-normalizers of the steps `t ≥ count_from`.
pub(crate) fn run_range<T: Real>(
    emit: &LogEmissions<T>,
    trans: &TransitionSeq<T>,
    init: &[T],
    range: Range<usize>,
    count_from: usize,
    mut visit: impl FnMut(usize, &[T]),
) -> Result<ScaledForwardState<T>> {
    let n = emit.n_states();
    let mut phi = vec![T::zero(); n];
    let mut a = init.to_vec();
    let mut loglik = T::zero();
    for t in range.clone() {
        if t > range.start {
            propagate(&phi, trans.get(t), &mut a);
        }
        let l = scaled_update(&a, emit.row(t), &mut phi, t)?;
        if t >= count_from {
            loglik += l;
        }
        visit(t, &phi);
    }
    Ok(ScaledForwardState { phi, loglik })
}

fn check_inputs<T: Real>(emit: &LogEmissions<T>, trans: &TransitionSeq<T>, init: &[T]) -> Result<()> {
    let n = emit.n_states();
    if trans.n_states() != n {
        return Err(Error::DimensionMismatch { expected: n, got: trans.n_states() });
    }
    if init.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: init.len() });
    }
    let v: Vec<f64> = init.iter().map(|x| x.value()).collect();
    check_probability_vector(&v, n, "initial vector")
}

/// Exact scaled forward recursion over the whole sequence.
pub fn forward_recursion<T: Real>(
    emit: &LogEmissions<T>,
    trans: &TransitionSeq<T>,
    init: &[T],
) -> Result<ScaledForwardState<T>> {
    forward_range(emit, trans, init, 0..emit.len())
}

/// Exact scaled forward recursion over a sub-range, initialized at its first step.
pub fn forward_range<T: Real>(
    emit: &LogEmissions<T>,
    trans: &TransitionSeq<T>,
    init: &[T],
    range: Range<usize>,
) -> Result<ScaledForwardState<T>> {
    check_inputs(emit, trans, init)?;
    if range.is_empty() || range.end > emit.len() {
        return Err(Error::InvalidArgument("forward range must be a non-empty part of the sequence".into()));
    }
    let start = range.start;
    run_range(emit, trans, init, range, start, |_, _| {})
}

/// Every intermediate `φ_t` of the exact recursion.
pub fn forward_trajectory<T: Real>(
    emit: &LogEmissions<T>,
    trans: &TransitionSeq<T>,
    init: &[T],
) -> Result<Vec<Vec<T>>> {
    check_inputs(emit, trans, init)?;
    let mut out = Vec::with_capacity(emit.len());
    run_range(emit, trans, init, 0..emit.len(), 0, |_, phi| out.push(phi.to_vec()))?;
    Ok(out)
}

/// Sum of exact log-likelihoods of independent segments, each restarted from `delta`.
pub fn forward_loglik_segments<T: Real>(
    emit: &LogEmissions<T>,
    trans: &TransitionSeq<T>,
    delta: &[T],
    segments: &[Range<usize>],
) -> Result<T> {
    let mut total = T::zero();
    for seg in segments {
        total += forward_range(emit, trans, delta, seg.clone())?.loglik;
    }
    Ok(total)
}
