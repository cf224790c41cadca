use crate::error::Result;
use crate::hmm::{softmax_rows, StructuralZeros};

pub const QUIET: usize = 0;
pub const FIRING: usize = 1;
pub const DECAYING: usize = 2;

/// Forbidden quiet→decaying and firing→quiet moves.
pub fn flare_zeros() -> StructuralZeros {
    StructuralZeros::from_pairs(3, &[(QUIET, DECAYING), (FIRING, QUIET)]).expect("valid flare zeros")
}

/// Row-stochastic flare matrix from a row-major `3 × 3` predictor block;
/// entries on the diagonal and at the structural zeros are ignored.
pub fn flare_transition_matrix(eta: &[f64]) -> Result<Vec<f64>> {
    softmax_rows(eta, &flare_zeros())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_predictors() {
        let g = flare_transition_matrix(&[0.0; 9]).unwrap();
        let third = 1.0 / 3.0;
        let want = [0.5, 0.5, 0.0, 0.0, 0.5, 0.5, third, third, third];
        for (a, b) in g.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
