use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{BandedLikelihoodConfig, StructuralZeros};
use crate::io::DataTable;
use crate::laplace::{JointNll, Transform};
use crate::spde::{Mesh, TriMesh};

use super::signal::{SignalEmissions, SignalPlusFieldModel};
use super::spatial::{Predictor, SpatialSwitchingModel};
use super::transition::flare_zeros;
use super::HmmModel;

fn default_bandwidth() -> usize {
    15
}

fn default_intercept() -> f64 {
    -2.0
}

/// Declarative model description, tagged by `"model"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelConfig {
    SignalPlusField(SignalConfig),
    SpatialSwitching(SpatialConfig),
}

/// Starting values of a Gaussian field's precision parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub tau: f64,
    pub kappa: f64,
    /// Oscillation parameter; only meaningful for the signal model.
    #[serde(default)]
    pub omega: Option<f64>,
    /// Field mean; only meaningful for the signal model.
    #[serde(default)]
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SignalFamily {
    /// `means[0]` is fixed at zero.
    Gaussian {
        means: Vec<f64>,
        sds: Vec<f64>,
    },
    Flare {
        sigma: f64,
        lambda: f64,
        r: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalConfig {
    pub emissions: SignalFamily,
    pub field: FieldConfig,
    /// Starting transition matrix, row-major; structural zeros must be 0.
    #[serde(default)]
    pub transition: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: usize,
    #[serde(default)]
    pub delta: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleConfig {
    pub locations: Vec<f64>,
    pub concentrations: Vec<f64>,
}

/// One transition predictor; states are numbered from 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub from: usize,
    pub to: usize,
    #[serde(default = "default_intercept")]
    pub intercept: f64,
    #[serde(default)]
    pub trig_order: usize,
    #[serde(default)]
    pub field: bool,
}

/// Automatic square-grid mesh over the observed locations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshConfig {
    pub nodes_per_side: usize,
    #[serde(default)]
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialConfig {
    pub n_states: usize,
    pub step: StepConfig,
    #[serde(default)]
    pub angle: Option<AngleConfig>,
    #[serde(default)]
    pub predictors: Vec<PredictorConfig>,
    pub field: FieldConfig,
    #[serde(default)]
    pub mesh: Option<MeshConfig>,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: usize,
    #[serde(default)]
    pub delta: Option<Vec<f64>>,
}

impl ModelConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn n_states(&self) -> usize {
        match self {
            ModelConfig::SignalPlusField(c) => match &c.emissions {
                SignalFamily::Gaussian { means, .. } => means.len(),
                SignalFamily::Flare { .. } => 3,
            },
            ModelConfig::SpatialSwitching(c) => c.n_states,
        }
    }

    pub fn bandwidth(&self) -> usize {
        match self {
            ModelConfig::SignalPlusField(c) => c.bandwidth,
            ModelConfig::SpatialSwitching(c) => c.bandwidth,
        }
    }

    /// Banded-likelihood settings; `δ` defaults to uniform.
    pub fn banded_config(&self) -> Result<BandedLikelihoodConfig> {
        let n = self.n_states();
        let delta = match self {
            ModelConfig::SignalPlusField(c) => c.delta.clone(),
            ModelConfig::SpatialSwitching(c) => c.delta.clone(),
        };
        let delta = delta.unwrap_or_else(|| vec![1.0 / n as f64; n]);
        let cfg = BandedLikelihoodConfig::new(self.bandwidth(), delta)?;
        cfg.validate(n)?;
        Ok(cfg)
    }
}

/// Consecutive runs of equal values in an optional segment column.
fn segments_from(col: Option<&[f64]>, len: usize) -> Vec<Range<usize>> {
    let Some(col) = col else { return vec![0..len] };
    let mut out = Vec::new();
    let mut start = 0;
    for t in 1..len {
        if col[t] != col[t - 1] {
            out.push(start..t);
            start = t;
        }
    }
    if len > 0 {
        out.push(start..len);
    }
    out
}

fn eta_from_matrix(gamma: &[Vec<f64>], zeros: &StructuralZeros, free: &[(usize, usize)]) -> Result<Vec<f64>> {
    let n = zeros.n_states();
    if gamma.len() != n || gamma.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!("transition must be {n} x {n}")));
    }
    free.iter()
        .map(|&(i, j)| {
            let (a, b) = (gamma[i][j], gamma[i][i]);
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::Config(format!(
                    "transition entry ({}, {}) and its diagonal must be positive",
                    i + 1,
                    j + 1
                )));
            }
            Ok((a / b).ln())
        })
        .collect()
}

fn default_eta(zeros: &StructuralZeros, free: &[(usize, usize)]) -> Vec<f64> {
    let n = zeros.n_states();
    free.iter()
        .map(|&(i, _)| {
            let k = (0..n).filter(|&j| j != i && !zeros.is_zero(i, j)).count() as f64;
            (0.1 / k / 0.9).ln()
        })
        .collect()
}

fn to_working(values: &[f64], transforms: &[Transform]) -> Vec<f64> {
    values.iter().zip(transforms).map(|(&v, t)| t.to_working(v)).collect()
}

fn build_signal(c: &SignalConfig, data: &DataTable, cfg: &BandedLikelihoodConfig) -> Result<SignalPlusFieldModel> {
    let y = data.require("y")?.to_vec();
    let len = y.len();
    let times = match data.get("time") {
        Some(t) => t.to_vec(),
        None => (0..len).map(|t| t as f64).collect(),
    };
    let segments = segments_from(data.get("segment"), len);
    let family = match &c.emissions {
        SignalFamily::Gaussian { means, sds } => {
            if means.is_empty() || sds.len() != means.len() {
                return Err(Error::Config("gaussian emissions need equally many means and sds".into()));
            }
            SignalEmissions::Gaussian { n_states: means.len() }
        }
        SignalFamily::Flare { .. } => SignalEmissions::Flare,
    };
    let model = SignalPlusFieldModel::new(&times, y, segments, family, c.field.omega.is_some(), cfg.clone())?;
    let mut natural = vec![c.field.mean, c.field.tau, c.field.kappa];
    natural.extend(c.field.omega);
    match &c.emissions {
        SignalFamily::Gaussian { means, sds } => {
            natural.extend(&means[1..]);
            natural.extend(sds);
        }
        SignalFamily::Flare { sigma, lambda, r } => natural.extend([*sigma, *lambda, *r]),
    }
    let zeros = match &c.emissions {
        SignalFamily::Flare { .. } => flare_zeros(),
        SignalFamily::Gaussian { means, .. } => StructuralZeros::none(means.len()),
    };
    let free = model.free_transitions().to_vec();
    let tr = model.transforms();
    let mut theta0 = to_working(&natural, &tr);
    theta0.extend(match &c.transition {
        Some(g) => eta_from_matrix(g, &zeros, &free)?,
        None => default_eta(&zeros, &free),
    });
    if theta0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("starting values lie outside the parameter space".into()));
    }
    model.with_initial(theta0)
}

fn build_spatial(
    c: &SpatialConfig,
    data: &DataTable,
    mesh: Option<&Mesh>,
    cfg: &BandedLikelihoodConfig,
) -> Result<SpatialSwitchingModel> {
    let n = c.n_states;
    if c.step.means.len() != n || c.step.sds.len() != n {
        return Err(Error::Config(format!("step needs {n} means and {n} sds")));
    }
    if let Some(a) = &c.angle {
        if a.locations.len() != n || a.concentrations.len() != n {
            return Err(Error::Config(format!("angle needs {n} locations and {n} concentrations")));
        }
    }
    let steps = data.require("step")?.to_vec();
    let len = steps.len();
    let angles = match &c.angle {
        Some(_) => Some(data.require("angle")?.to_vec()),
        None => None,
    };
    let hours = match (data.get("hour"), data.get("t")) {
        (Some(h), _) => h.to_vec(),
        (None, Some(t)) => t.iter().map(|v| v.rem_euclid(24.0)).collect(),
        (None, None) => (0..len).map(|t| (t % 24) as f64).collect(),
    };
    let (xs, ys) = (data.require("x")?, data.require("y")?);
    let locations: Vec<[f64; 2]> = xs.iter().zip(ys).map(|(&a, &b)| [a, b]).collect();
    let built;
    let tri = match (mesh, &c.mesh) {
        (Some(Mesh::TwoD(m)), _) => m,
        (Some(Mesh::OneD(_)), _) => return Err(Error::Config("spatial model needs a triangle mesh".into())),
        (None, Some(mc)) => {
            built = TriMesh::covering(&locations, mc.nodes_per_side, mc.margin)?;
            &built
        }
        (None, None) => return Err(Error::Config("spatial model needs a mesh file or a \"mesh\" section".into())),
    };
    let mut preds = Vec::new();
    for p in &c.predictors {
        if p.from == 0 || p.to == 0 || p.from > n || p.to > n || p.from == p.to {
            return Err(Error::Config(format!("invalid predictor {} -> {}", p.from, p.to)));
        }
        preds.push(Predictor { from: p.from - 1, to: p.to - 1, trig_order: p.trig_order, field: p.field });
    }
    let segments = segments_from(data.get("segment"), len);
    let model = SpatialSwitchingModel::new(n, steps, angles, hours, &locations, tri, preds, segments, cfg.clone())?;
    let mut theta0: Vec<f64> = c.step.means.iter().chain(&c.step.sds).map(|v| v.ln()).collect();
    if let Some(a) = &c.angle {
        theta0.extend(&a.locations);
        theta0.extend(a.concentrations.iter().map(|&r| Transform::Logit.to_working(r)));
    }
    for p in model.predictors() {
        let given = c.predictors.iter().find(|q| q.from == p.from + 1 && q.to == p.to + 1);
        theta0.push(given.map_or(default_intercept(), |q| q.intercept));
        theta0.extend(std::iter::repeat(0.0).take(2 * p.trig_order));
    }
    for _ in 0..model.n_fields() {
        theta0.push(c.field.tau.ln());
        theta0.push(c.field.kappa.ln());
    }
    if theta0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("starting values lie outside the parameter space".into()));
    }
    model.with_initial(theta0)
}

/// Builds the joint negative log-likelihood described by `config` on `data`.
pub fn build_joint_nll(
    config: &ModelConfig,
    data: &DataTable,
    mesh: Option<&Mesh>,
    cfg: &BandedLikelihoodConfig,
) -> Result<Box<dyn HmmModel>> {
    Ok(match config {
        ModelConfig::SignalPlusField(c) => Box::new(build_signal(c, data, cfg)?),
        ModelConfig::SpatialSwitching(c) => Box::new(build_spatial(c, data, mesh, cfg)?),
    })
}
