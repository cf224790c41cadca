//! Simulation study of the spatial switching model and the bandwidth error harness.

mod a3;
mod decay;
mod experiment;
mod gaussian;
mod metrics;

pub use a3::{sample_von_mises, simulate_a3, A3Data, A3Protocol};
pub use decay::{index_of_primitivity, log_error_slope, verify_decay, DecayBoundConfig, DecayRow};
pub use experiment::{
    a3_grid, a3_model, a3_surfaces, fit_a3_replicate, replicate_seed, run_a3_experiment, summarize_a3, write_a3_csv,
    A3FitOptions, A3Replicate, A3Summary,
};
pub use gaussian::GaussianHmm;
pub use metrics::{a3_metrics, pearson, A3Metrics, A3Surface, MetricGrid};
