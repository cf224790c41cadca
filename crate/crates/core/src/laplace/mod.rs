//! Laplace-approximated marginal likelihood with nested optimization.

mod inner;
mod joint;
mod outer;
mod sample;
mod transform;

pub use inner::{inner_mode, laplace_nll, InnerOptions, InnerResult, Laplace};
pub use joint::{column_groups, dense_fd_hessian, fd_gradient, fd_hessian, JointNll};
pub use outer::{fit, FitDiagnostics, FitOptions, LaplaceResult};
pub use sample::{sample_gaussian, sample_posterior};
pub use transform::Transform;
