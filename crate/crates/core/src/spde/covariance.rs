use std::f64::consts::PI;

/// Closed-form covariance of the one-dimensional oscillating SPDE field at unit `τ`.
pub fn oscillating_covariance(v: f64, w: f64, kappa: f64, omega: f64) -> f64 {
    let h = (v - w).abs();
    let half = 0.5 * PI * omega;
    (-kappa * half.cos() * h).exp() * (half + kappa * half.sin() * h).sin() / (2.0 * (PI * omega).sin() * kappa.powi(3))
}
