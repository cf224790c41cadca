use crate::error::{Error, Result};
use crate::scalar::Real;

/// Mask of transitions fixed at probability zero, row-major `N × N`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructuralZeros {
    n: usize,
    mask: Vec<bool>,
}

impl StructuralZeros {
    pub fn none(n: usize) -> Self {
        StructuralZeros { n, mask: vec![false; n * n] }
    }

    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut z = Self::none(n);
        for &(i, j) in pairs {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!("structural zero ({i}, {j}) out of range")));
            }
            z.mask[i * n + j] = true;
        }
        for i in 0..n {
            if (0..n).all(|j| z.mask[i * n + j]) {
                return Err(Error::AllZeroRow { row: i });
            }
        }
        Ok(z)
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_zero(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n + j]
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        (0..self.n * self.n).filter(|&p| self.mask[p]).map(|p| (p / self.n, p % self.n)).collect()
    }

    /// Off-diagonal entries that carry a free predictor.
    pub fn free_entries(&self) -> Vec<(usize, usize)> {
        let n = self.n;
        (0..n * n).map(|p| (p / n, p % n)).filter(|&(i, j)| i != j && !self.is_zero(i, j)).collect()
    }
}

/// Row-wise softmax of a predictor matrix with `η_ii ≡ 0` as reference.
///
/// Writes the row-major stochastic matrix into `out`.
pub fn softmax_rows_into<T: Real>(eta: &[T], zeros: &StructuralZeros, out: &mut [T]) -> Result<()> {
    let n = zeros.n;
    if eta.len() != n * n || out.len() != n * n {
        return Err(Error::DimensionMismatch { expected: n * n, got: eta.len().min(out.len()) });
    }
    for i in 0..n {
        let row = i * n;
        let mut mx: Option<T> = None;
        for j in 0..n {
            if !zeros.is_zero(i, j) {
                let e = if i == j { T::zero() } else { eta[row + j] };
                mx = Some(mx.map_or(e, |m: T| m.max_of(e)));
            }
        }
        let mx = mx.ok_or(Error::AllZeroRow { row: i })?;
        let mut s = T::zero();
        for j in 0..n {
            out[row + j] = if zeros.is_zero(i, j) {
                T::zero()
            } else {
                let e = if i == j { T::zero() } else { eta[row + j] };
                (e - mx).exp()
            };
            s += out[row + j];
        }
        for j in 0..n {
            out[row + j] /= s;
        }
    }
    Ok(())
}

pub fn softmax_rows<T: Real>(eta: &[T], zeros: &StructuralZeros) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); eta.len()];
    softmax_rows_into(eta, zeros, &mut out)?;
    Ok(out)
}

/// Pulls an adjoint on `Γ` back to the predictors; diagonal and structural
/// zero entries receive zero.
pub fn softmax_rows_backward<T: Real>(gamma: &[T], gamma_bar: &[T], zeros: &StructuralZeros, eta_bar: &mut [T]) {
    let n = zeros.n;
    for i in 0..n {
        let row = i * n;
        let mut dot = T::zero();
        for j in 0..n {
            dot += gamma[row + j] * gamma_bar[row + j];
        }
        for j in 0..n {
            eta_bar[row + j] =
                if i == j || zeros.is_zero(i, j) { T::zero() } else { gamma[row + j] * (gamma_bar[row + j] - dot) };
        }
    }
}

/// Linear predictors over time.
#[derive(Clone, Debug)]
pub enum Predictors {
    Homogeneous(Vec<f64>),
    /// One `N × N` block per time step; indexing wraps around cyclically.
    Varying(Vec<f64>),
}

/// Softmax-linked transition model with optional structural zeros.
#[derive(Clone, Debug)]
pub struct TransitionModel {
    zeros: StructuralZeros,
    predictors: Predictors,
}

impl TransitionModel {
    pub fn new(zeros: StructuralZeros, predictors: Predictors) -> Result<Self> {
        let nn = zeros.n * zeros.n;
        let len = match &predictors {
            Predictors::Homogeneous(v) => v.len(),
            Predictors::Varying(v) => {
                if v.is_empty() || v.len() % nn != 0 {
                    return Err(Error::DimensionMismatch { expected: nn, got: v.len() % nn.max(1) });
                }
                nn
            }
        };
        if len != nn {
            return Err(Error::DimensionMismatch { expected: nn, got: len });
        }
        Ok(TransitionModel { zeros, predictors })
    }

    pub fn homogeneous(zeros: StructuralZeros, eta: Vec<f64>) -> Result<Self> {
        Self::new(zeros, Predictors::Homogeneous(eta))
    }

    /// Homogeneous model with the given stochastic matrix (no structural zeros
    /// unless entries are exactly 0).
    pub fn from_matrix(n: usize, gamma: &[f64]) -> Result<Self> {
        if gamma.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: gamma.len() });
        }
        let mut pairs = Vec::new();
        let mut eta = vec![0.0; n * n];
        for i in 0..n {
            let d = gamma[i * n + i];
            if !(d > 0.0) {
                return Err(Error::InvalidArgument("diagonal entries must be positive".into()));
            }
            for j in 0..n {
                let g = gamma[i * n + j];
                if g == 0.0 {
                    pairs.push((i, j));
                } else if i != j {
                    eta[i * n + j] = (g / d).ln();
                }
            }
        }
        Self::homogeneous(StructuralZeros::from_pairs(n, &pairs)?, eta)
    }

    pub fn n_states(&self) -> usize {
        self.zeros.n
    }

    pub fn zeros(&self) -> &StructuralZeros {
        &self.zeros
    }

    pub fn predictors(&self) -> &Predictors {
        &self.predictors
    }

    pub fn eta(&self, t: usize) -> &[f64] {
        let nn = self.zeros.n * self.zeros.n;
        match &self.predictors {
            Predictors::Homogeneous(v) => v,
            Predictors::Varying(v) => {
                let s = (t % (v.len() / nn)) * nn;
                &v[s..s + nn]
            }
        }
    }

    /// Transition matrix `Γ^{(t)}` governing the move from step `t − 1` to `t`.
    pub fn gamma(&self, t: usize) -> Result<Vec<f64>> {
        softmax_rows(self.eta(t), &self.zeros)
    }

    pub fn realize(&self, len: usize) -> Result<TransitionSeq<f64>> {
        match &self.predictors {
            Predictors::Homogeneous(v) => TransitionSeq::homogeneous(self.zeros.n, softmax_rows(v, &self.zeros)?),
            Predictors::Varying(_) => {
                let mut mats = Vec::with_capacity(len * self.zeros.n * self.zeros.n);
                for t in 0..len {
                    mats.extend(self.gamma(t)?);
                }
                TransitionSeq::varying(self.zeros.n, mats)
            }
        }
    }
}

/// Realized transition matrices, either one shared matrix or one per step.
#[derive(Clone, Debug)]
pub struct TransitionSeq<T> {
    n: usize,
    mats: Vec<T>,
    homogeneous: bool,
}

impl<T: Real> TransitionSeq<T> {
    pub fn homogeneous(n: usize, gamma: Vec<T>) -> Result<Self> {
        if gamma.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: gamma.len() });
        }
        Ok(TransitionSeq { n, mats: gamma, homogeneous: true })
    }

    pub fn varying(n: usize, mats: Vec<T>) -> Result<Self> {
        if mats.is_empty() || mats.len() % (n * n) != 0 {
            return Err(Error::DimensionMismatch { expected: n * n, got: mats.len() });
        }
        Ok(TransitionSeq { n, mats, homogeneous: false })
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, t: usize) -> &[T] {
        let nn = self.n * self.n;
        if self.homogeneous {
            &self.mats
        } else {
            &self.mats[t * nn..(t + 1) * nn]
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.homogeneous
    }
}
