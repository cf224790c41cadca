use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Settings of the spatial-switching simulation study. Defaults are the
/// desk-scale experiment; [`A3Protocol::full`] gives the complete one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct A3Protocol {
    pub lengths: Vec<usize>,
    pub replicates: usize,
    pub bandwidths: Vec<usize>,
    pub step_means: [f64; 2],
    pub step_sds: [f64; 2],
    pub beta0_12: f64,
    pub beta0_21: f64,
    pub angle_concentration: f64,
    /// Amplitude of the true field; 0 switches it off.
    pub field_amplitude: f64,
    pub field_period: f64,
    pub delta: [f64; 2],
    /// Metric grid cells per side.
    pub grid_size: usize,
    /// Radius of the non-convex hull of the track, relative to its larger extent.
    pub hull_radius: f64,
    pub seed: u64,
}

impl Default for A3Protocol {
    fn default() -> Self {
        A3Protocol {
            lengths: vec![5000],
            replicates: 20,
            bandwidths: vec![15],
            step_means: [0.2, 5.0],
            step_sds: [0.5, 3.0],
            beta0_12: -2.0,
            beta0_21: -2.0,
            angle_concentration: 0.3,
            field_amplitude: 2.0,
            field_period: 40.0,
            delta: [0.5, 0.5],
            grid_size: 128,
            hull_radius: 0.1,
            seed: 20_240_601,
        }
    }
}

impl A3Protocol {
    pub fn full() -> Self {
        A3Protocol {
            lengths: vec![5000, 10_000],
            replicates: 200,
            bandwidths: vec![2, 5, 10, 15],
            grid_size: 512,
            ..Self::default()
        }
    }

    /// `u(x, y) = a sin(2πx/p) + a cos(2πy/p)`.
    pub fn field(&self, r: [f64; 2]) -> f64 {
        let w = 2.0 * PI / self.field_period;
        self.field_amplitude * ((w * r[0]).sin() + (w * r[1]).cos())
    }

    pub fn eta12(&self) -> f64 {
        self.beta0_12
    }

    pub fn eta21(&self, r: [f64; 2]) -> f64 {
        self.beta0_21 + self.field(r)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.step_means.iter().chain(&self.step_sds).all(|&v| v > 0.0)
            && self.angle_concentration >= 0.0
            && (self.delta[0] + self.delta[1] - 1.0).abs() < 1e-12
            && self.delta.iter().all(|&d| d >= 0.0)
            && self.field_period > 0.0
            && self.grid_size >= 2
            && self.hull_radius > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("invalid simulation protocol".into()))
        }
    }
}

/// One simulated track. Row `t` holds the location before step `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct A3Data {
    pub steps: Vec<f64>,
    /// Turning angles in `(−π, π]`.
    pub angles: Vec<f64>,
    pub locations: Vec<[f64; 2]>,
    /// 0-based states.
    pub states: Vec<usize>,
    pub field: Vec<f64>,
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let mut v = (a + PI).rem_euclid(2.0 * PI) - PI;
    if v <= -PI {
        v += 2.0 * PI;
    }
    v
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// von Mises draw by the Best–Fisher rejection scheme.
pub fn sample_von_mises<R: Rng + ?Sized>(rng: &mut R, mean: f64, concentration: f64) -> f64 {
    if concentration < 1e-8 {
        return wrap_angle(mean + rng.gen_range(-PI..PI));
    }
    let k = concentration;
    let tau = 1.0 + (1.0 + 4.0 * k * k).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * k);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.gen();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = k * (r - f);
        let u2: f64 = rng.gen();
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let u3: f64 = rng.gen();
            let theta = if u3 > 0.5 { f.acos() } else { -f.acos() };
            return wrap_angle(mean + theta);
        }
    }
}

/// Simulates a track of length `len` from the protocol.
pub fn simulate_a3(protocol: &A3Protocol, len: usize, seed: u64) -> Result<A3Data> {
    protocol.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let gammas = [
        Gamma::new(shape(protocol, 0), scale(protocol, 0)).map_err(|e| Error::InvalidArgument(e.to_string()))?,
        Gamma::new(shape(protocol, 1), scale(protocol, 1)).map_err(|e| Error::InvalidArgument(e.to_string()))?,
    ];
    let mut data = A3Data {
        steps: Vec::with_capacity(len),
        angles: Vec::with_capacity(len),
        locations: Vec::with_capacity(len),
        states: Vec::with_capacity(len),
        field: Vec::with_capacity(len),
    };
    let mut pos = [0.0, 0.0];
    let mut heading = 0.0;
    let mut state = 0;
    for t in 0..len {
        let u = protocol.field(pos);
        state = if t == 0 {
            usize::from(rng.gen::<f64>() >= protocol.delta[0])
        } else {
            let leave = if state == 0 { logistic(protocol.eta12()) } else { logistic(protocol.beta0_21 + u) };
            if rng.gen::<f64>() < leave {
                1 - state
            } else {
                state
            }
        };
        let step = gammas[state].sample(&mut rng);
        let toward = (-pos[1]).atan2(-pos[0]);
        let turn = sample_von_mises(&mut rng, wrap_angle(toward - heading), protocol.angle_concentration);
        data.locations.push(pos);
        data.field.push(u);
        data.states.push(state);
        data.steps.push(step);
        data.angles.push(turn);
        heading = wrap_angle(heading + turn);
        pos = [pos[0] + step * heading.cos(), pos[1] + step * heading.sin()];
    }
    Ok(data)
}

fn shape(p: &A3Protocol, j: usize) -> f64 {
    (p.step_means[j] / p.step_sds[j]).powi(2)
}

fn scale(p: &A3Protocol, j: usize) -> f64 {
    p.step_sds[j] * p.step_sds[j] / p.step_means[j]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_range() {
        for a in [-7.0, -PI, 0.0, PI, 4.0, 100.0] {
            let w = wrap_angle(a);
            assert!(w > -PI && w <= PI);
            assert!(((a - w) / (2.0 * PI)).fract().abs() < 1e-9 || ((a - w) / (2.0 * PI)).fract().abs() > 1.0 - 1e-9);
        }
    }
}
