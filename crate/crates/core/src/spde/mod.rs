//! Finite-element meshes and SPDE-based Gaussian Markov random fields.

mod covariance;
mod fem;
mod gmrf;
mod mesh;
mod precision;
mod projection;

pub use covariance::oscillating_covariance;
pub use fem::{assemble, assemble_1d, assemble_2d, FemMatrices};
pub use gmrf::{gmrf_logdensity, Gmrf};
pub use mesh::{Mesh, Mesh1D, TriMesh};
pub use precision::{build_precision, PrecisionSpec, SpdeOperator};
pub use projection::{project, project_1d, project_2d, Projection};
