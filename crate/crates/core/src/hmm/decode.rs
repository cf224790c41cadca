use crate::error::{Error, Result};

use super::forward::{propagate, scaled_update, LogEmissions};
use super::transition::TransitionSeq;

fn check(emit: &LogEmissions<f64>, trans: &TransitionSeq<f64>, init: &[f64]) -> Result<()> {
    let n = emit.n_states();
    if trans.n_states() != n || init.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: init.len().min(trans.n_states()) });
    }
    super::forward::check_probability_vector(init, n, "initial vector")
}

/// Smoothed `Pr(S_t = j | all observations)` via scaled forward–backward.
pub fn local_state_probabilities(
    emit: &LogEmissions<f64>,
    trans: &TransitionSeq<f64>,
    init: &[f64],
) -> Result<Vec<Vec<f64>>> {
    check(emit, trans, init)?;
    let n = emit.n_states();
    let len = emit.len();
    let mut phis = vec![vec![0.0; n]; len];
    let mut a = init.to_vec();
    for t in 0..len {
        if t > 0 {
            propagate(&phis[t - 1], trans.get(t), &mut a);
        }
        scaled_update(&a, emit.row(t), &mut phis[t], t)?;
    }
    let mut beta = vec![1.0 / n as f64; n];
    let mut out = vec![vec![0.0; n]; len];
    let mut tmp = vec![0.0; n];
    for t in (0..len).rev() {
        let mut s = 0.0;
        for j in 0..n {
            out[t][j] = phis[t][j] * beta[j];
            s += out[t][j];
        }
        for v in out[t].iter_mut() {
            *v /= s;
        }
        if t == 0 {
            break;
        }
        let le = emit.row(t);
        let mx = le.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for j in 0..n {
            tmp[j] = (le[j] - mx).exp() * beta[j];
        }
        let g = trans.get(t);
        let mut total = 0.0;
        for i in 0..n {
            beta[i] = (0..n).map(|j| g[i * n + j] * tmp[j]).sum();
            total += beta[i];
        }
        if !(total > 0.0) {
            return Err(Error::ZeroLikelihoodStep { step: t });
        }
        for b in beta.iter_mut() {
            *b /= total;
        }
    }
    Ok(out)
}

/// Most likely state sequence (0-based states); ties go to the lower index.
pub fn viterbi(emit: &LogEmissions<f64>, trans: &TransitionSeq<f64>, init: &[f64]) -> Result<Vec<usize>> {
    check(emit, trans, init)?;
    let n = emit.n_states();
    let len = emit.len();
    let mut back = vec![0usize; len * n];
    let mut v: Vec<f64> = (0..n).map(|j| init[j].ln() + emit.row(0)[j]).collect();
    if v.iter().all(|x| *x == f64::NEG_INFINITY) {
        return Err(Error::ZeroLikelihoodStep { step: 0 });
    }
    let mut next = vec![0.0; n];
    for t in 1..len {
        let g = trans.get(t);
        let le = emit.row(t);
        for j in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for i in 0..n {
                let s = v[i] + g[i * n + j].ln();
                if s > best {
                    best = s;
                    arg = i;
                }
            }
            next[j] = best + le[j];
            back[t * n + j] = arg;
        }
        if next.iter().all(|x| *x == f64::NEG_INFINITY) {
            return Err(Error::ZeroLikelihoodStep { step: t });
        }
        // keep magnitudes bounded on long sequences
        let mx = next.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (a, b) in v.iter_mut().zip(&next) {
            *a = b - mx;
        }
    }
    let mut state = 0;
    for j in 1..n {
        if v[j] > v[state] {
            state = j;
        }
    }
    let mut path = vec![0; len];
    path[len - 1] = state;
    for t in (1..len).rev() {
        state = back[t * n + state];
        path[t - 1] = state;
    }
    Ok(path)
}
