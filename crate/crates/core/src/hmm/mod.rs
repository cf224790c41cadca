//! Hidden Markov model building blocks: softmax-linked transition matrices,
//! exact and banded scaled forward recursions, their derivatives, decoding and
//! periodically stationary distributions.

mod banded;
mod decode;
mod derivatives;
mod forward;
mod stationary;
mod transition;

pub use banded::{banded_forward, banded_forward_segments, windows, BandedLikelihoodConfig, Window, WindowInit};
pub use decode::{local_state_probabilities, viterbi};
pub use derivatives::{
    banded_derivatives, chain_to_latent, ActiveDrivers, Driver, DriverHessian, DriverInputs, DriverSensitivity,
    HmmDerivatives,
};
pub use forward::{
    forward_loglik_segments, forward_range, forward_recursion, forward_trajectory, EmissionModel, LogEmissions,
    ScaledForwardState,
};
pub use stationary::{periodic_stationary, stationary_distribution};
pub use transition::{
    softmax_rows, softmax_rows_backward, softmax_rows_into, Predictors, StructuralZeros, TransitionModel, TransitionSeq,
};
