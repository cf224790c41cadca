//! Hidden Markov models coupled with latent Gaussian fields.
//!
//! The numerical core is generic over a [`Real`] scalar so that forward-mode
//! [`Dual`] numbers can flow through the forward algorithm and the SPDE
//! precision; the model and optimization layers work in `f64`, with the
//! aliases below naming the common instantiations.

pub mod error;
pub mod hmm;
pub mod io;
pub mod laplace;
pub mod models;
pub mod scalar;
pub mod sim;
pub mod sparse;
pub mod spde;

pub use error::{Error, Result};
pub use scalar::{Dual, Dual64, Real};

pub type SparseMatrix = sparse::SparseSymmetric<f64>;
pub type Factor = sparse::CholeskyFactor<f64>;
pub type Emissions = hmm::LogEmissions<f64>;
pub type Transitions = hmm::TransitionSeq<f64>;
