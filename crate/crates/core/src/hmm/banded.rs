use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::forward::{check_probability_vector, run_range, LogEmissions};
use super::transition::TransitionSeq;

/// Bandwidth and initialization vectors of the banded forward algorithm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandedLikelihoodConfig {
    pub bandwidth: usize,
    /// Initial distribution of the first block.
    pub delta: Vec<f64>,
    /// Fixed vector from which every later block's filter is rebuilt.
    pub rho: Vec<f64>,
}

impl BandedLikelihoodConfig {
    /// Config with uniform `ρ`.
    pub fn new(bandwidth: usize, delta: Vec<f64>) -> Result<Self> {
        let n = delta.len();
        let cfg = BandedLikelihoodConfig { bandwidth, delta, rho: vec![1.0 / n as f64; n] };
        cfg.validate(n)?;
        Ok(cfg)
    }

    pub fn uniform(bandwidth: usize, n: usize) -> Result<Self> {
        Self::new(bandwidth, vec![1.0 / n as f64; n])
    }

    pub fn with_rho(mut self, rho: Vec<f64>) -> Result<Self> {
        self.rho = rho;
        self.validate(self.delta.len())?;
        Ok(self)
    }

    pub fn with_bandwidth(&self, bandwidth: usize) -> Self {
        BandedLikelihoodConfig { bandwidth, ..self.clone() }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.bandwidth == 0 {
            return Err(Error::InvalidArgument("bandwidth must be at least 1".into()));
        }
        check_probability_vector(&self.delta, n, "delta")?;
        check_probability_vector(&self.rho, n, "rho")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowInit {
    Delta,
    Rho,
}

/// One forward run of the banded algorithm: steps `start..end` starting from
/// `init ∘ P(x_start)`, with log-normalizers summed from `count_from` on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub end: usize,
    pub count_from: usize,
    pub init: WindowInit,
}

impl Window {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Decomposes a segment into forward windows. The first two blocks form one
/// exact window; block `b ≥ 3` is preceded by a warm-up over block `b − 1`
/// started from `ρ`. A trailing short block keeps a full-length warm-up.
pub fn windows(segment: Range<usize>, k: usize) -> Vec<Window> {
    let (a, b) = (segment.start, segment.end);
    if b <= a {
        return Vec::new();
    }
    if b - a <= 2 * k {
        return vec![Window { start: a, end: b, count_from: a, init: WindowInit::Delta }];
    }
    let mut out = vec![Window { start: a, end: a + 2 * k, count_from: a, init: WindowInit::Delta }];
    let mut s = a + 2 * k;
    while s < b {
        out.push(Window { start: s - k, end: (s + k).min(b), count_from: s, init: WindowInit::Rho });
        s += k;
    }
    out
}

pub(crate) fn all_windows(segments: &[Range<usize>], k: usize) -> Vec<Window> {
    segments.iter().flat_map(|s| windows(s.clone(), k)).collect()
}

pub(crate) fn check_segments(segments: &[Range<usize>], len: usize) -> Result<()> {
    let mut prev = 0;
    for s in segments {
        if s.is_empty() || s.start < prev || s.end > len {
            return Err(Error::InvalidArgument("segments must be non-empty, ordered and inside the sequence".into()));
        }
        prev = s.end;
    }
    Ok(())
}

/// Banded approximation of the log-likelihood of a single sequence.
pub fn banded_forward<T: Real>(
    emit: &LogEmissions<T>,
    trans: &TransitionSeq<T>,
    cfg: &BandedLikelihoodConfig,
) -> Result<T> {
    banded_forward_segments(emit, trans, cfg, &[0..emit.len()])
}

/// Banded log-likelihood summed over independent segments, each restarted from `δ`.
pub fn banded_forward_segments<T: Real>(
    emit: &LogEmissions<T>,
    trans: &TransitionSeq<T>,
    cfg: &BandedLikelihoodConfig,
    segments: &[Range<usize>],
) -> Result<T> {
    let n = emit.n_states();
    if trans.n_states() != n {
        return Err(Error::DimensionMismatch { expected: n, got: trans.n_states() });
    }
    cfg.validate(n)?;
    check_segments(segments, emit.len())?;
    let delta: Vec<T> = cfg.delta.iter().map(|&v| T::from_f64(v)).collect();
    let rho: Vec<T> = cfg.rho.iter().map(|&v| T::from_f64(v)).collect();
    let ws = all_windows(segments, cfg.bandwidth);
    let parts: Vec<Result<T>> = ws
        .par_iter()
        .map(|w| {
            let init = match w.init {
                WindowInit::Delta => &delta,
                WindowInit::Rho => &rho,
            };
            run_range(emit, trans, init, w.start..w.end, w.count_from, |_, _| {}).map(|s| s.loglik)
        })
        .collect();
    let mut total = T::zero();
    for p in parts {
        total += p?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_layout() {
        let w = windows(0..23, 5);
        assert_eq!(w[0], Window { start: 0, end: 10, count_from: 0, init: WindowInit::Delta });
        assert_eq!(w[1], Window { start: 5, end: 15, count_from: 10, init: WindowInit::Rho });
        assert_eq!(w[2], Window { start: 10, end: 20, count_from: 15, init: WindowInit::Rho });
        assert_eq!(w[3], Window { start: 15, end: 23, count_from: 20, init: WindowInit::Rho });
        assert_eq!(w.len(), 4);
        let counted: usize = w.iter().map(|w| w.end - w.count_from).sum();
        assert_eq!(counted, 23);
        assert_eq!(windows(3..9, 10), vec![Window { start: 3, end: 9, count_from: 3, init: WindowInit::Delta }]);
    }

    #[test]
    fn bandwidth_zero_rejected() {
        assert!(BandedLikelihoodConfig::uniform(0, 2).is_err());
    }
}
