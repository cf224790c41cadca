use serde::{Deserialize, Serialize};

/// Map from an unconstrained working scale to a parameter's natural scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// Positive parameters.
    Log,
    /// Parameters in `(0, 1)`.
    Logit,
    /// Parameters in `(lo, hi)`.
    ScaledLogit {
        lo: f64,
        hi: f64,
    },
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Transform {
    pub fn to_natural(self, z: f64) -> f64 {
        match self {
            Transform::Identity => z,
            Transform::Log => z.exp(),
            Transform::Logit => logistic(z),
            Transform::ScaledLogit { lo, hi } => lo + (hi - lo) * logistic(z),
        }
    }

    pub fn to_working(self, v: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::Log => v.ln(),
            Transform::Logit => (v / (1.0 - v)).ln(),
            Transform::ScaledLogit { lo, hi } => {
                let p = (v - lo) / (hi - lo);
                (p / (1.0 - p)).ln()
            }
        }
    }
}
