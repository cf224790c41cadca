use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use hmmgf::io::DataTable;
use hmmgf::laplace::{fit, FitDiagnostics, FitOptions};
use hmmgf::models::{build_joint_nll, HmmModel, ModelConfig};
use hmmgf::sim::{
    a3_grid, replicate_seed, run_a3_experiment, simulate_a3, summarize_a3, verify_decay, write_a3_csv, A3FitOptions,
    A3Protocol, DecayBoundConfig, GaussianHmm,
};
use hmmgf::spde::{Mesh, TriMesh};

#[derive(Parser)]
#[command(name = "hmmgf", version, about = "Hidden Markov models with Gaussian-field random effects")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a movement track with a spatially varying switching rate.
    Simulate(SimulateArgs),
    /// Fit a model by Laplace-approximate maximum likelihood.
    Fit(FitArgs),
    /// Decode states from a previous fit.
    Decode(DecodeArgs),
    /// Banded likelihood error against the exact one, per bandwidth.
    BenchBandwidth(BenchArgs),
    /// Run the replicated simulation experiment.
    A3Experiment(ExperimentArgs),
}

#[derive(Args)]
struct ScaleArgs {
    /// Reduced experiment (the default).
    #[arg(long, conflicts_with = "full")]
    desk_scale: bool,
    /// Complete experiment: both lengths, all bandwidths, 200 replicates, 512 grid.
    #[arg(long)]
    full: bool,
}

impl ScaleArgs {
    fn protocol(&self) -> A3Protocol {
        if self.full {
            A3Protocol::full()
        } else {
            A3Protocol::default()
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Track length (default: the protocol's first length).
    #[arg(long)]
    length: Option<usize>,
    /// Mesh nodes along the longer side of the track.
    #[arg(long, default_value_t = 18)]
    mesh_nodes: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    scale: ScaleArgs,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Overrides the configured bandwidth.
    #[arg(long)]
    bandwidth: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Refit at the bandwidth plus this increment and report the largest relative change.
    #[arg(long)]
    bandwidth_check: Option<usize>,
    /// Accepted for symmetry with the other subcommands; fitting is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// `fit.json` written by `fit`.
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    length: usize,
    /// Bandwidths; the full length is always added.
    #[arg(long, value_delimiter = ',', default_values_t = vec![2, 5, 10, 15, 20, 25])]
    bandwidth: Vec<usize>,
    /// Diagonal of the two-state transition matrix.
    #[arg(long, default_value_t = 0.9)]
    persistence: f64,
    /// Distance between the two emission means, in sds.
    #[arg(long, default_value_t = 2.0)]
    separation: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    length: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    bandwidth: Option<Vec<usize>>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    scale: ScaleArgs,
}

#[derive(Serialize, Deserialize)]
struct Estimate {
    name: String,
    estimate: f64,
    working: f64,
}

#[derive(Serialize, Deserialize)]
struct BandwidthCheck {
    bandwidth: usize,
    max_relative_change: f64,
    converged: bool,
}

#[derive(Serialize, Deserialize)]
struct FitReport {
    bandwidth: usize,
    converged: bool,
    nll: f64,
    parameters: Vec<Estimate>,
    diagnostics: FitDiagnostics,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    bandwidth_check: Option<BandwidthCheck>,
    x_hat: Vec<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Decode(a) => decode(a),
        Command::BenchBandwidth(a) => bench(a),
        Command::A3Experiment(a) => experiment(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn out_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn simulate(a: &SimulateArgs) -> Result<bool> {
    let mut protocol = a.scale.protocol();
    if let Some(s) = a.seed {
        protocol.seed = s;
    }
    let len = a.length.unwrap_or(protocol.lengths[0]);
    let data = simulate_a3(&protocol, len, replicate_seed(&protocol, len, 0))?;
    out_dir(&a.out)?;

    let col = |f: &dyn Fn(usize) -> f64| (0..len).map(f).collect::<Vec<f64>>();
    let table = DataTable::new()
        .with_column("t", col(&|t| t as f64))?
        .with_column("step", data.steps.clone())?
        .with_column("angle", data.angles.clone())?
        .with_column("x", col(&|t| data.locations[t][0]))?
        .with_column("y", col(&|t| data.locations[t][1]))?
        .with_column("true_state", col(&|t| (data.states[t] + 1) as f64))?;
    table.write_path(&a.out.join("data.csv"))?;

    let grid = a3_grid(&protocol, &data)?;
    let centers = grid.centers();
    let logistic = |v: f64| 1.0 / (1.0 + (-v).exp());
    let truth = DataTable::new()
        .with_column("x", centers.iter().map(|c| c[0]).collect())?
        .with_column("y", centers.iter().map(|c| c[1]).collect())?
        .with_column("inside", grid.inside.iter().map(|&b| f64::from(u8::from(b))).collect())?
        .with_column("u", centers.iter().map(|&c| protocol.field(c)).collect())?
        .with_column("gamma12", vec![logistic(protocol.eta12()); centers.len()])?
        .with_column("gamma21", centers.iter().map(|&c| logistic(protocol.eta21(c))).collect())?;
    truth.write_path(&a.out.join("truth.csv"))?;

    let mesh = TriMesh::covering(&data.locations, a.mesh_nodes, 0.05)?;
    let mut f = fs::File::create(a.out.join("mesh.txt"))?;
    Mesh::TwoD(mesh).write(&mut f)?;

    // a starting configuration for refitting the simulated track
    let config = serde_json::json!({
        "model": "spatial_switching",
        "n_states": 2,
        "step": { "means": [0.3, 4.0], "sds": [0.5, 3.0] },
        "predictors": [
            { "from": 1, "to": 2, "intercept": -1.0 },
            { "from": 2, "to": 1, "intercept": -1.0, "field": true }
        ],
        "field": { "tau": 1.0, "kappa": 0.2 },
        "bandwidth": 15,
        "delta": protocol.delta,
    });
    write_json(&a.out.join("config.json"), &config)?;
    Ok(true)
}

fn load_model(m: &ModelArgs) -> Result<(ModelConfig, DataTable, Box<dyn HmmModel>, usize)> {
    let text = fs::read_to_string(&m.config).with_context(|| format!("reading {}", m.config.display()))?;
    let config = ModelConfig::from_json(&text)?;
    let data = DataTable::read_path(&m.data)?;
    let mesh = m.mesh.as_deref().map(Mesh::read_path).transpose()?;
    let mut banded = config.banded_config()?;
    if let Some(k) = m.bandwidth {
        if k == 0 {
            bail!("bandwidth must be at least 1");
        }
        banded = banded.with_bandwidth(k);
    }
    let k = banded.bandwidth;
    let model = build_joint_nll(&config, &data, mesh.as_ref(), &banded)?;
    Ok((config, data, model, k))
}

fn natural(model: &dyn HmmModel, theta: &[f64]) -> Vec<f64> {
    model.transforms().iter().zip(theta).map(|(t, &z)| t.to_natural(z)).collect()
}

fn write_decoded(model: &dyn HmmModel, x: &[f64], theta: &[f64], path: &Path) -> Result<()> {
    let inputs = model.hmm_inputs(x, theta)?;
    let states = inputs.viterbi()?;
    let probs = inputs.local_probabilities()?;
    let mut table = DataTable::new()
        .with_column("t", (0..states.len()).map(|t| t as f64).collect())?
        .with_column("state", states.iter().map(|&s| (s + 1) as f64).collect())?;
    for j in 0..model.n_states() {
        table.push(&format!("p{}", j + 1), probs.iter().map(|p| p[j]).collect())?;
    }
    table.write_path(path)?;
    Ok(())
}

fn fit_cmd(a: &FitArgs) -> Result<bool> {
    let (config, data, model, k) = load_model(&a.model)?;
    let opts = FitOptions { joint_precision: false, ..FitOptions::default() };
    let result = fit(model.as_ref(), &model.initial_theta(), &opts)?;
    let mut converged = result.diagnostics.converged;

    let check = match a.bandwidth_check {
        Some(inc) => {
            let mesh = a.model.mesh.as_deref().map(Mesh::read_path).transpose()?;
            let banded = config.banded_config()?.with_bandwidth(k + inc);
            let wider = build_joint_nll(&config, &data, mesh.as_ref(), &banded)?;
            let refit = fit(wider.as_ref(), &result.theta_hat, &opts)?;
            let (a0, a1) = (natural(model.as_ref(), &result.theta_hat), natural(wider.as_ref(), &refit.theta_hat));
            let change = a0.iter().zip(&a1).map(|(u, v)| (u - v).abs() / u.abs().max(1e-8)).fold(0.0, f64::max);
            converged &= refit.diagnostics.converged;
            Some(BandwidthCheck {
                bandwidth: k + inc,
                max_relative_change: change,
                converged: refit.diagnostics.converged,
            })
        }
        None => None,
    };

    out_dir(&a.out)?;
    let names = model.param_names();
    let nat = natural(model.as_ref(), &result.theta_hat);
    let report = FitReport {
        bandwidth: k,
        converged: result.diagnostics.converged,
        nll: result.nll,
        parameters: names
            .into_iter()
            .zip(nat.iter().zip(&result.theta_hat))
            .map(|(name, (&estimate, &working))| Estimate { name, estimate, working })
            .collect(),
        diagnostics: result.diagnostics.clone(),
        bandwidth_check: check,
        x_hat: result.x_hat.clone(),
    };
    write_json(&a.out.join("fit.json"), &report)?;
    write_decoded(model.as_ref(), &result.x_hat, &result.theta_hat, &a.out.join("decoded.csv"))?;
    if !converged {
        eprintln!("optimizer did not converge: {}", result.diagnostics.message);
    }
    Ok(converged)
}

fn decode(a: &DecodeArgs) -> Result<bool> {
    let (_, _, model, _) = load_model(&a.model)?;
    let text = fs::read_to_string(&a.fit).with_context(|| format!("reading {}", a.fit.display()))?;
    let report: FitReport = serde_json::from_str(&text).context("parsing fit report")?;
    let names = model.param_names();
    if report.parameters.len() != names.len() || report.parameters.iter().zip(&names).any(|(p, n)| &p.name != n) {
        bail!("fit report parameters do not match the model");
    }
    if report.x_hat.len() != model.latent_dim() {
        bail!("fit report has {} latent values, the model needs {}", report.x_hat.len(), model.latent_dim());
    }
    let theta: Vec<f64> = report.parameters.iter().map(|p| p.working).collect();
    out_dir(&a.out)?;
    write_decoded(model.as_ref(), &report.x_hat, &theta, &a.out.join("decoded.csv"))?;
    Ok(true)
}

fn bench(a: &BenchArgs) -> Result<bool> {
    let hmm = GaussianHmm::two_state(a.persistence, a.separation);
    let (y, _) = hmm.simulate(a.length, a.seed)?;
    let emit = hmm.log_emissions(&y)?;
    let trans = hmm.transitions()?;
    let bound = DecayBoundConfig::from_model(&emit, &trans)?;
    let mut ks = a.bandwidth.clone();
    if ks.iter().any(|&k| k == 0) {
        bail!("bandwidths must be at least 1");
    }
    ks.push(a.length);
    ks.sort_unstable();
    ks.dedup();
    let rows = verify_decay(&emit, &trans, &hmm.delta, &ks, &bound)?;
    out_dir(&a.out)?;
    DataTable::new()
        .with_column("k", rows.iter().map(|r| r.k as f64).collect())?
        .with_column("error", rows.iter().map(|r| r.error).collect())?
        .with_column("theorem_bound", rows.iter().map(|r| r.bound).collect())?
        .write_path(&a.out.join("decay.csv"))?;
    Ok(true)
}

fn experiment(a: &ExperimentArgs) -> Result<bool> {
    let mut protocol = a.scale.protocol();
    if let Some(s) = a.seed {
        protocol.seed = s;
    }
    if let Some(r) = a.replicates {
        protocol.replicates = r;
    }
    if let Some(l) = &a.length {
        protocol.lengths = l.clone();
    }
    if let Some(k) = &a.bandwidth {
        protocol.bandwidths = k.clone();
    }
    protocol.validate()?;
    let rows = run_a3_experiment(&protocol, &A3FitOptions::default());
    out_dir(&a.out)?;
    let f = fs::File::create(a.out.join("a3.csv"))?;
    write_a3_csv(&rows, f)?;
    let summary = summarize_a3(&rows);
    write_json(&a.out.join("a3_summary.json"), &summary)?;
    Ok(rows.iter().all(|r| r.3.as_ref().is_ok_and(|x| x.converged)))
}
