//! Symmetric sparse and banded matrices with Cholesky factorizations.

mod banded;
mod cholesky;
pub mod dense;
mod mm;
mod ordering;
mod symmetric;

pub use banded::{BandedCholesky, BandedSymmetric};
pub use cholesky::{cholesky, cholesky_banded, CholeskyFactor, SparseCholesky, SymbolicCholesky};
pub use mm::{read_matrix_market, write_matrix_market};
pub use ordering::{minimum_degree, Ordering};
pub use symmetric::{SparsePattern, SparseSymmetric};
