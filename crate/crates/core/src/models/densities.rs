use std::f64::consts::PI;

use crate::scalar::Real;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn normal_logdensity<T: Real>(x: T, mean: T, sd: T) -> T {
    let z = (x - mean) / sd;
    -T::from_f64(0.5) * z * z - sd.ln() - T::from_f64(LN_SQRT_2PI)
}

/// Gamma log-density in the mean/sd parameterization; `-∞` off the support.
pub fn gamma_logdensity(x: f64, mean: f64, sd: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    let shape = mean * mean / (sd * sd);
    let rate = mean / (sd * sd);
    shape * rate.ln() - libm::lgamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

pub fn wrapped_cauchy_logdensity(angle: f64, location: f64, concentration: f64) -> f64 {
    let r = concentration;
    ((1.0 - r * r) / (2.0 * PI * (1.0 + r * r - 2.0 * r * (angle - location).cos()))).ln()
}

/// Exponentially modified Gaussian: `N(loc, sigma²) + Exp(lambda)`.
pub fn emg_logdensity<T: Real>(y: T, loc: T, sigma: T, lambda: T) -> T {
    let half = T::from_f64(0.5);
    let ls2 = lambda * sigma * sigma;
    let z = (loc + ls2 - y) / (T::from_f64(std::f64::consts::SQRT_2) * sigma);
    (lambda * half).ln() + lambda * half * (loc + loc + ls2 - y - y) + z.ln_erfc()
}

/// `Σ_k a_k sin(2πk·hour/24) + b_k cos(2πk·hour/24)` with `coeffs = [a_1..a_K, b_1..b_K]`.
pub fn periodic_predictor(hour: f64, coeffs: &[f64]) -> f64 {
    let order = coeffs.len() / 2;
    let w = 2.0 * PI * hour / 24.0;
    (1..=order)
        .map(|k| {
            let a = k as f64 * w;
            coeffs[k - 1] * a.sin() + coeffs[order + k - 1] * a.cos()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_special_case() {
        let m = 1.7;
        assert!((gamma_logdensity(m, m, m) - ((1.0 / m).ln() - 1.0)).abs() < 1e-14);
        assert_eq!(gamma_logdensity(0.0, 1.0, 1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn uniform_wrapped_cauchy() {
        for a in [-3.0, 0.0, 1.0, 3.1] {
            assert!((wrapped_cauchy_logdensity(a, 0.4, 0.0) + (2.0 * PI).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn emg_far_tail_is_finite() {
        let v = emg_logdensity(-50.0, 0.0, 1.0, 2.0);
        assert!(v.is_finite() && v < -1000.0);
    }

    #[test]
    fn predictor_direct_value() {
        let mut c = [0.0; 6];
        c[0] = 1.0;
        assert!((periodic_predictor(6.0, &c) - 1.0).abs() < 1e-15);
    }
}
