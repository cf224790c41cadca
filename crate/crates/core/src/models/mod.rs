//! Concrete model families: an HMM observed through additive Gaussian-process
//! noise, and a movement model whose transition predictors carry spatial fields.

mod config;
mod densities;
mod signal;
mod spatial;
mod transition;

use std::ops::Range;

pub use config::{
    build_joint_nll, AngleConfig, FieldConfig, MeshConfig, ModelConfig, PredictorConfig, SignalConfig, SignalFamily,
    SpatialConfig, StepConfig,
};
pub use densities::{
    emg_logdensity, gamma_logdensity, normal_logdensity, periodic_predictor, wrapped_cauchy_logdensity,
};
pub use signal::{SignalEmissions, SignalPlusFieldModel};
pub use spatial::{Predictor, SpatialSwitchingModel};
pub use transition::{flare_transition_matrix, flare_zeros, DECAYING, FIRING, QUIET};

use crate::error::Result;
use crate::hmm::{local_state_probabilities, viterbi, LogEmissions, TransitionSeq};
use crate::laplace::JointNll;

/// Everything the decoders need at a given `(x, θ)`.
#[derive(Clone, Debug)]
pub struct HmmInputs {
    pub emissions: LogEmissions<f64>,
    pub transitions: TransitionSeq<f64>,
    pub delta: Vec<f64>,
    pub segments: Vec<Range<usize>>,
}

impl HmmInputs {
    /// Viterbi path, decoded segment by segment.
    pub fn viterbi(&self) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(self.emissions.len());
        for seg in &self.segments {
            let (e, t) = self.slice(seg.clone())?;
            out.extend(viterbi(&e, &t, &self.delta)?);
        }
        Ok(out)
    }

    pub fn local_probabilities(&self) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(self.emissions.len());
        for seg in &self.segments {
            let (e, t) = self.slice(seg.clone())?;
            out.extend(local_state_probabilities(&e, &t, &self.delta)?);
        }
        Ok(out)
    }

    fn slice(&self, seg: Range<usize>) -> Result<(LogEmissions<f64>, TransitionSeq<f64>)> {
        let n = self.emissions.n_states();
        let e = LogEmissions::new(n, self.emissions.data()[seg.start * n..seg.end * n].to_vec())?;
        let t = if self.transitions.is_homogeneous() {
            self.transitions.clone()
        } else {
            let mats = seg.clone().flat_map(|t| self.transitions.get(t).to_vec()).collect();
            TransitionSeq::varying(n, mats)?
        };
        Ok((e, t))
    }
}

/// A joint NLL that also exposes its hidden Markov structure.
pub trait HmmModel: JointNll {
    fn n_states(&self) -> usize;
    fn initial_theta(&self) -> Vec<f64>;
    fn hmm_inputs(&self, x: &[f64], theta: &[f64]) -> Result<HmmInputs>;
}
