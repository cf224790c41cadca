use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hmm::BandedLikelihoodConfig;
use crate::laplace::{fit, FitDiagnostics, FitOptions, JointNll, LaplaceResult};
use crate::models::{Predictor, SpatialSwitchingModel};
use crate::spde::{project_2d, TriMesh};

use super::a3::{simulate_a3, A3Data, A3Protocol};
use super::metrics::{a3_metrics, A3Metrics, A3Surface, MetricGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct A3FitOptions {
    /// Mesh nodes along the longer side of the track's bounding box.
    pub mesh_nodes: usize,
    pub mesh_margin: f64,
    pub fit: FitOptions,
}

impl Default for A3FitOptions {
    fn default() -> Self {
        A3FitOptions {
            mesh_nodes: 18,
            mesh_margin: 0.05,
            fit: FitOptions { joint_precision: false, ..FitOptions::default() },
        }
    }
}

/// Outcome of one fitted replicate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct A3Replicate {
    pub replicate: usize,
    pub len: usize,
    pub bandwidth: usize,
    pub metrics: A3Metrics,
    pub names: Vec<String>,
    /// Working-scale estimates.
    pub theta: Vec<f64>,
    pub nll: f64,
    pub converged: bool,
    pub diagnostics: FitDiagnostics,
    pub seconds: f64,
}

impl A3Replicate {
    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.theta[i])
    }
}

pub fn replicate_seed(protocol: &A3Protocol, len: usize, replicate: usize) -> u64 {
    protocol.seed.wrapping_add(1_000_003 * len as u64).wrapping_add(replicate as u64)
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn quantile(v: &[f64], q: f64) -> f64 {
    let mut s: Vec<f64> = v.iter().cloned().filter(|x| x.is_finite()).collect();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s[((s.len() - 1) as f64 * q).round() as usize]
}

/// Two-state fit with a field on both off-diagonal predictors and no angles.
pub fn a3_model(
    data: &A3Data,
    bandwidth: usize,
    delta: [f64; 2],
    opts: &A3FitOptions,
) -> Result<(SpatialSwitchingModel, TriMesh)> {
    let mesh = TriMesh::covering(&data.locations, opts.mesh_nodes, opts.mesh_margin)?;
    let len = data.steps.len();
    let preds = vec![
        Predictor { from: 0, to: 1, trig_order: 0, field: true },
        Predictor { from: 1, to: 0, trig_order: 0, field: true },
    ];
    let cfg = BandedLikelihoodConfig::new(bandwidth, delta.to_vec())?;
    let model = SpatialSwitchingModel::new(
        2,
        data.steps.clone(),
        None,
        vec![0.0; len],
        &data.locations,
        &mesh,
        preds,
        vec![0..len],
        cfg,
    )?;
    // data-driven start: moments below and above the median step, a field
    // range of a quarter of the track extent with unit marginal sd
    let med = quantile(&data.steps, 0.5);
    let moments = |upper: bool| {
        let v: Vec<f64> = data.steps.iter().cloned().filter(|&s| s.is_finite() && (s > med) == upper).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|s| (s - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        (m, sd.max(1e-3 * m))
    };
    let ((m1, s1), (m2, s2)) = (moments(false), moments(true));
    let nodes = mesh.nodes();
    let extent = nodes.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max) - nodes[0][0];
    let kappa = 8f64.sqrt() / (0.25 * extent);
    let tau = 1.0 / ((4.0 * std::f64::consts::PI).sqrt() * kappa);
    let theta0 = vec![m1.ln(), m2.ln(), s1.ln(), s2.ln(), -1.0, -1.0, tau.ln(), kappa.ln(), tau.ln(), kappa.ln()];
    Ok((model.with_initial(theta0)?, mesh))
}

/// Estimated and true transition surfaces for a fitted replicate.
pub fn a3_surfaces(
    protocol: &A3Protocol,
    data: &A3Data,
    model: &SpatialSwitchingModel,
    mesh: &TriMesh,
    fit: &LaplaceResult,
    grid: &MetricGrid,
) -> Result<(A3Surface, A3Surface)> {
    let (x, theta) = (&fit.x_hat, &fit.theta_hat);
    let eta = model.eta(x, theta)?;
    let len = data.steps.len();
    let centers = grid.centers();
    let proj = project_2d(mesh, &centers);
    let surface = |p: usize| -> Vec<f64> {
        let (b0, _) = model.coefficients(theta, p);
        let w = model.field_weights(x, p).expect("field attached");
        (0..centers.len()).map(|i| logistic(b0 + proj.eval(i, w))).collect()
    };
    let p12 = model.predictor_index(0, 1).expect("predictor 1->2");
    let p21 = model.predictor_index(1, 0).expect("predictor 2->1");
    let est = A3Surface {
        eta12_track: (0..len).map(|t| eta[t * 4 + 1]).collect(),
        eta21_track: (0..len).map(|t| eta[t * 4 + 2]).collect(),
        gamma12_grid: surface(p12),
        gamma21_grid: surface(p21),
    };
    let truth = A3Surface {
        eta12_track: vec![protocol.eta12(); len],
        eta21_track: data.field.iter().map(|u| protocol.beta0_21 + u).collect(),
        gamma12_grid: vec![logistic(protocol.eta12()); centers.len()],
        gamma21_grid: centers.iter().map(|&c| logistic(protocol.eta21(c))).collect(),
    };
    Ok((est, truth))
}

/// Metric grid restricted to the non-convex hull of the track.
pub fn a3_grid(protocol: &A3Protocol, data: &A3Data) -> Result<MetricGrid> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &data.locations {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    MetricGrid::nonconvex_hull(&data.locations, protocol.grid_size, protocol.hull_radius * extent)
}

pub fn fit_a3_replicate(
    protocol: &A3Protocol,
    len: usize,
    bandwidth: usize,
    replicate: usize,
    opts: &A3FitOptions,
) -> Result<A3Replicate> {
    let start = Instant::now();
    let data = simulate_a3(protocol, len, replicate_seed(protocol, len, replicate))?;
    let (model, mesh) = a3_model(&data, bandwidth, protocol.delta, opts)?;
    let result = fit(&model, &model_theta0(&model), &opts.fit)?;
    let grid = a3_grid(protocol, &data)?;
    let (est, truth) = a3_surfaces(protocol, &data, &model, &mesh, &result, &grid)?;
    Ok(A3Replicate {
        replicate,
        len,
        bandwidth,
        metrics: a3_metrics(&est, &truth, &grid)?,
        names: model.param_names(),
        theta: result.theta_hat.clone(),
        nll: result.nll,
        converged: result.diagnostics.converged,
        diagnostics: result.diagnostics.clone(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn model_theta0(model: &SpatialSwitchingModel) -> Vec<f64> {
    use crate::models::HmmModel;
    model.initial_theta()
}

/// Every `(replicate, T, k)` combination of the protocol, in parallel.
pub fn run_a3_experiment(
    protocol: &A3Protocol,
    opts: &A3FitOptions,
) -> Vec<(usize, usize, usize, Result<A3Replicate>)> {
    let mut jobs = Vec::new();
    for r in 0..protocol.replicates {
        for &len in &protocol.lengths {
            for &k in &protocol.bandwidths {
                jobs.push((r, len, k));
            }
        }
    }
    jobs.par_iter().map(|&(r, len, k)| (r, len, k, fit_a3_replicate(protocol, len, k, r, opts))).collect()
}

/// One CSV row per `(replicate, T, k)`; failed fits keep their row with empty metrics.
pub fn write_a3_csv<W: Write>(rows: &[(usize, usize, usize, Result<A3Replicate>)], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let names: Vec<String> = rows.iter().find_map(|r| r.3.as_ref().ok().map(|x| x.names.clone())).unwrap_or_default();
    let mut header: Vec<String> = [
        "replicate",
        "T",
        "k",
        "converged",
        "nll",
        "mean_eta12_diff",
        "mean_eta21_diff",
        "correlation21",
        "rmse12",
        "rmse21",
        "cells",
        "seconds",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(names.iter().cloned());
    header.push("error".into());
    wtr.write_record(&header)?;
    for (r, len, k, res) in rows {
        let mut rec = vec![r.to_string(), len.to_string(), k.to_string()];
        match res {
            Ok(x) => {
                let m = &x.metrics;
                rec.push(x.converged.to_string());
                for v in [x.nll, m.mean_eta12_diff, m.mean_eta21_diff, m.correlation21, m.rmse12, m.rmse21] {
                    rec.push(format!("{v:?}"));
                }
                rec.push(m.cells.to_string());
                rec.push(format!("{:.3}", x.seconds));
                rec.extend(x.theta.iter().map(|v| format!("{v:?}")));
                rec.push(String::new());
            }
            Err(e) => {
                rec.push("false".into());
                rec.extend(std::iter::repeat(String::new()).take(8 + names.len()));
                rec.push(e.to_string());
            }
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Medians over the successful replicates of one `(T, k)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct A3Summary {
    pub len: usize,
    pub bandwidth: usize,
    pub runs: usize,
    pub failures: usize,
    pub converged: usize,
    pub median_correlation21: f64,
    pub median_rmse12: f64,
    pub median_rmse21: f64,
    pub median_abs_eta12_diff: f64,
    pub median_abs_eta21_diff: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.retain(|x| !x.is_nan());
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn summarize_a3(rows: &[(usize, usize, usize, Result<A3Replicate>)]) -> Vec<A3Summary> {
    let mut cells: Vec<(usize, usize)> = rows.iter().map(|r| (r.1, r.2)).collect();
    cells.sort_unstable();
    cells.dedup();
    cells
        .into_iter()
        .map(|(len, k)| {
            let all: Vec<&Result<A3Replicate>> = rows.iter().filter(|r| r.1 == len && r.2 == k).map(|r| &r.3).collect();
            let ok: Vec<&A3Replicate> = all.iter().filter_map(|r| r.as_ref().ok()).collect();
            let pick = |f: &dyn Fn(&A3Replicate) -> f64| median(ok.iter().map(|r| f(r)).collect());
            A3Summary {
                len,
                bandwidth: k,
                runs: all.len(),
                failures: all.len() - ok.len(),
                converged: ok.iter().filter(|r| r.converged).count(),
                median_correlation21: pick(&|r| r.metrics.correlation21),
                median_rmse12: pick(&|r| r.metrics.rmse12),
                median_rmse21: pick(&|r| r.metrics.rmse21),
                median_abs_eta12_diff: pick(&|r| r.metrics.mean_eta12_diff.abs()),
                median_abs_eta21_diff: pick(&|r| r.metrics.mean_eta21_diff.abs()),
            }
        })
        .collect()
}
