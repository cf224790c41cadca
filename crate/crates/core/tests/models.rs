use std::f64::consts::PI;

use hmmgf::hmm::{banded_forward_segments, softmax_rows, BandedLikelihoodConfig, LogEmissions, TransitionSeq};
use hmmgf::laplace::{inner_mode, laplace_nll, JointNll};
use hmmgf::models::{
    build_joint_nll, emg_logdensity, flare_transition_matrix, gamma_logdensity, periodic_predictor,
    wrapped_cauchy_logdensity, HmmModel, ModelConfig, Predictor, SignalEmissions, SignalPlusFieldModel,
    SpatialSwitchingModel,
};
use hmmgf::spde::{assemble_1d, Mesh1D, SpdeOperator, TriMesh};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Gamma, Normal};

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn gamma_density_matches_reference_and_normalizes() {
    for &(m, s) in &[(0.2, 0.5), (5.0, 3.0), (1.0, 0.3)] {
        let shape = m * m / (s * s);
        let rate = m / (s * s);
        let reference = Gamma::new(shape, rate).unwrap();
        for i in 1..200 {
            let x = i as f64 * 0.05 * m;
            assert!((gamma_logdensity(x, m, s) - reference.ln_pdf(x)).abs() < 1e-10);
        }
        // for shape < 1, x = v^(1/shape) removes the singularity at zero
        let total = if shape < 1.0 {
            simpson(
                |v| {
                    if v == 0.0 {
                        return rate.powf(shape) / statrs::function::gamma::gamma(shape) / shape;
                    }
                    let x = v.powf(1.0 / shape);
                    gamma_logdensity(x, m, s).exp() * x.powf(1.0 - shape) / shape
                },
                0.0,
                (50.0 * m).powf(shape),
                200_000,
            )
        } else {
            simpson(|x| if x > 0.0 { gamma_logdensity(x, m, s).exp() } else { 0.0 }, 0.0, 50.0 * m, 200_000)
        };
        // the interval misses a sliver of upper tail, taken from the reference cdf
        let mass = reference.cdf(50.0 * m);
        assert!((total - mass).abs() < 1e-6, "({m}, {s}): {total} vs {mass}");
        assert!(1.0 - mass < 1e-4);
    }
}

#[test]
fn wrapped_cauchy_normalizes_and_is_symmetric() {
    for &(nu, rho) in &[(0.0, 0.5), (1.0, 0.9), (-2.0, 0.1)] {
        let total = simpson(|a| wrapped_cauchy_logdensity(a, nu, rho).exp(), -PI, PI, 20_000);
        assert!((total - 1.0).abs() < 1e-8);
        for a in [0.1, 0.7, 2.0] {
            let d = wrapped_cauchy_logdensity(nu + a, nu, rho) - wrapped_cauchy_logdensity(nu - a, nu, rho);
            assert!(d.abs() < 1e-12);
        }
    }
}

#[test]
fn emg_limits_normalization_and_monte_carlo() {
    let gauss = -0.5 * (2.0 * PI).ln();
    let v = emg_logdensity(0.0, 0.0, 1.0, 1e3);
    assert!(((v - gauss).exp() - 1.0).abs() < 0.01);

    for &(m, s, l) in &[(0.0, 1.0, 1.0), (2.0, 0.3, 0.5), (-1.0, 2.0, 5.0)] {
        let (a, b) = (m - 10.0 * s, m + 10.0 * s + 10.0 / l);
        let total = simpson(|y| emg_logdensity(y, m, s, l).exp(), a, b, 200_000);
        let mass = emg_cdf(b, m, s, l) - emg_cdf(a, m, s, l);
        assert!((total - mass).abs() < 1e-6, "({m}, {s}, {l}): {total} vs {mass}");
        assert!(1.0 - mass < 1e-4);
    }

    let (s, l) = (1.0, 1.0);
    let mode = simpson_argmax(|y| emg_logdensity(y, 0.0, s, l), -3.0, 5.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let normal = rand_distr::Normal::new(0.0, s).unwrap();
    let expo = rand_distr::Exp::new(l).unwrap();
    let bw = 0.02;
    let n = 1_000_000;
    let mut hits = 0usize;
    for _ in 0..n {
        let y: f64 = rng.sample(normal) + rng.sample(expo);
        if (y - mode).abs() < bw {
            hits += 1;
        }
    }
    let estimate = hits as f64 / (n as f64 * 2.0 * bw);
    let exact = emg_logdensity(mode, 0.0, s, l).exp();
    assert!((estimate / exact - 1.0).abs() < 0.02, "{estimate} vs {exact}");
}

/// Closed-form cdf of a normal plus an independent exponential.
fn emg_cdf(y: f64, m: f64, s: f64, l: f64) -> f64 {
    let z = Normal::new(0.0, 1.0).unwrap();
    let u = (y - m) / s;
    z.cdf(u) - (-l * (y - m) + 0.5 * l * l * s * s + z.cdf(u - l * s).ln()).exp()
}

fn simpson_argmax(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (0..=8000)
        .map(|i| a + (b - a) * i as f64 / 8000.0)
        .fold((f64::NEG_INFINITY, a), |(best, at), y| {
            let v = f(y);
            if v > best {
                (v, y)
            } else {
                (best, at)
            }
        })
        .1
}

proptest! {
    #[test]
    fn flare_matrix_matches_hand_softmax(e in prop::collection::vec(-3.0f64..3.0, 9)) {
        let g = flare_transition_matrix(&e).unwrap();
        let free: [&[usize]; 3] = [&[0, 1], &[1, 2], &[0, 1, 2]];
        for i in 0..3 {
            let w: Vec<f64> = free[i].iter().map(|&j| if i == j { 1.0 } else { e[i * 3 + j].exp() }).collect();
            let z: f64 = w.iter().sum();
            for j in 0..3 {
                let want = free[i].iter().position(|&c| c == j).map_or(0.0, |p| w[p] / z);
                prop_assert!((g[i * 3 + j] - want).abs() < 1e-12);
            }
        }
        prop_assert_eq!(g[2], 0.0);
        prop_assert_eq!(g[3], 0.0);
        for i in 0..3 {
            for j in 0..3 {
                let sq: f64 = (0..3).map(|k| g[i * 3 + k] * g[k * 3 + j]).sum();
                prop_assert!(sq > 0.0);
            }
        }
    }

    #[test]
    fn periodic_predictor_has_daily_period(c in prop::collection::vec(-2.0f64..2.0, 6), h in 0.0f64..24.0) {
        prop_assert!((periodic_predictor(h, &c) - periodic_predictor(h + 24.0, &c)).abs() < 1e-12);
        prop_assert!((periodic_predictor(0.0, &c) - periodic_predictor(24.0 - 1e-13, &c)).abs() < 1e-10);
    }
}

#[test]
fn zero_coefficients_give_zero_predictor() {
    for h in [0.0, 5.5, 23.9] {
        assert_eq!(periodic_predictor(h, &[0.0; 6]), 0.0);
    }
}

fn one_state_model(len: usize, seed: u64) -> SignalPlusFieldModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<f64> = (0..len).map(|t| (t as f64 * 0.2).sin() + rng.gen_range(-0.5..0.5)).collect();
    let times: Vec<f64> = (0..len).map(|t| t as f64).collect();
    let cfg = BandedLikelihoodConfig::new(5, vec![1.0]).unwrap();
    SignalPlusFieldModel::new(&times, y, vec![0..len], SignalEmissions::Gaussian { n_states: 1 }, false, cfg).unwrap()
}

/// Dense `σ²I + Q⁻¹` marginal NLL of `y` and the GLS posterior mean of `x`.
fn gaussian_oracle(model: &SignalPlusFieldModel, theta: &[f64]) -> (f64, Vec<f64>) {
    let y = model.observations();
    let len = y.len();
    let (mu, tau, kappa, sd) = (theta[0], theta[1].exp(), theta[2].exp(), theta[3].exp());
    let mesh = Mesh1D::new((0..len).map(|t| t as f64).collect()).unwrap();
    let q = SpdeOperator::new(&assemble_1d(&mesh).unwrap()).unwrap().precision_with(tau, kappa, 1.0).to_dense();
    let q = DMatrix::from_fn(len, len, |i, j| q[i][j]);
    let cov = q.clone().try_inverse().unwrap() + DMatrix::identity(len, len) * (sd * sd);
    let r = DVector::from_iterator(len, y.iter().map(|v| v - mu));
    let chol = cov.clone().cholesky().unwrap();
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let nll = 0.5 * (len as f64 * (2.0 * PI).ln() + logdet + r.dot(&chol.solve(&r)));
    let post = (DMatrix::identity(len, len) / (sd * sd) + &q).try_inverse().unwrap() * (&q * &r);
    (nll, post.iter().cloned().collect())
}

#[test]
fn gaussian_signal_model_is_quadratic_and_exact() {
    let model = one_state_model(60, 1);
    let theta = [0.3, 0.2, -0.5, -0.7];
    let r = inner_mode(&model, &theta, &vec![0.0; 60]).unwrap();
    assert_eq!(r.iterations, 1);
    let (nll, post) = gaussian_oracle(&model, &theta);
    for (a, b) in r.x_hat.iter().zip(&post) {
        assert!((a - b).abs() < 1e-8);
    }
    let (laplace, _) = laplace_nll(&model, &theta, &vec![0.0; 60]).unwrap();
    assert!((laplace - nll).abs() < 1e-8, "{laplace} vs {nll}");
}

fn flare_series(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = 0.0;
    (0..len)
        .map(|t| {
            let u: f64 = rng.gen();
            x = if u < 0.8 {
                rng.gen_range(-0.1..0.1)
            } else if u < 0.9 {
                x + rng.gen_range(0.5..2.0)
            } else {
                0.6 * x
            };
            x + 0.5 * (t as f64 * 0.05).sin()
        })
        .collect()
}

fn flare_model(len: usize, k: usize) -> SignalPlusFieldModel {
    let y = flare_series(len, 5);
    let times: Vec<f64> = (0..len).map(|t| t as f64).collect();
    let cfg = BandedLikelihoodConfig::uniform(k, 3).unwrap();
    let half = len / 2;
    SignalPlusFieldModel::new(&times, y, vec![0..half, half..len], SignalEmissions::Flare, true, cfg).unwrap()
}

fn flare_theta() -> Vec<f64> {
    // mu, ln tau, ln kappa, logit omega, ln sigma, ln lambda, logit r, four predictors
    vec![0.1, 0.5, -1.0, 1.5, -1.0, 0.2, 0.4, -2.0, -1.0, -1.5, -0.5]
}

fn check_derivatives(model: &dyn HmmModel, x: &[f64], theta: &[f64]) {
    let (v, g, h) = model.value_grad_hess(x, theta, true).unwrap();
    assert!((v - model.value(x, theta).unwrap()).abs() < 1e-9 * v.abs().max(1.0));
    let h = h.unwrap();
    let step = 1e-5;
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + step;
        let fp = model.value(&xp, theta).unwrap();
        let gp = model.gradient(&xp, theta).unwrap();
        xp[i] = x[i] - step;
        let fm = model.value(&xp, theta).unwrap();
        let gm = model.gradient(&xp, theta).unwrap();
        xp[i] = x[i];
        let fd = (fp - fm) / (2.0 * step);
        assert!((g[i] - fd).abs() <= (1e-5 * fd.abs()).max(1e-6), "grad[{i}]: {} vs {fd}", g[i]);
        for j in 0..x.len() {
            let fd = (gp[j] - gm[j]) / (2.0 * step);
            let pattern_has = model.hessian_pattern().contains(i, j);
            if !pattern_has {
                assert!(fd.abs() < 1e-8, "({i}, {j}) outside the pattern: {fd}");
                continue;
            }
            let a = h.get(i, j);
            assert!((a - fd).abs() <= (1e-5 * fd.abs()).max(1e-6), "hess[{i}][{j}]: {a} vs {fd}");
        }
    }
}

#[test]
fn flare_model_derivatives_match_finite_differences() {
    let model = flare_model(200, 6);
    let x: Vec<f64> = flare_series(200, 9).iter().map(|v| 0.5 * v).collect();
    let theta = flare_theta();
    assert_eq!(model.param_dim(), theta.len());
    assert!(model.value(&x, &theta).unwrap().is_finite());
    check_derivatives(&model, &x, &theta);
}

#[test]
fn flare_model_decodes_and_fits_inner_mode() {
    let model = flare_model(120, 5);
    let theta = flare_theta();
    let r = inner_mode(&model, &theta, &vec![0.0; 120]).unwrap();
    assert!(r.grad_norm <= 1e-8);
    let inputs = model.hmm_inputs(&r.x_hat, &theta).unwrap();
    let path = inputs.viterbi().unwrap();
    assert_eq!(path.len(), 120);
    // forbidden moves never appear in the decoded path
    for w in path.windows(2) {
        assert!(!(w[0] == 0 && w[1] == 2) && !(w[0] == 1 && w[1] == 0));
    }
    let probs = inputs.local_probabilities().unwrap();
    assert!(probs.iter().all(|p| (p.iter().sum::<f64>() - 1.0).abs() < 1e-10));
}

fn spatial_model(len: usize, k: usize, angles: bool) -> SpatialSwitchingModel {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let steps: Vec<f64> = (0..len).map(|_| rng.gen_range(0.05..4.0)).collect();
    let ang: Vec<f64> = (0..len).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let locs: Vec<[f64; 2]> = (0..len).map(|t| [(t as f64 * 0.3).cos() * 3.0, (t as f64 * 0.17).sin() * 3.0]).collect();
    let mesh = TriMesh::covering(&locs, 4, 0.1).unwrap();
    let hours: Vec<f64> = (0..len).map(|t| (t % 24) as f64).collect();
    let preds = vec![
        Predictor { from: 0, to: 1, trig_order: 1, field: true },
        Predictor { from: 1, to: 0, trig_order: 0, field: true },
    ];
    let cfg = BandedLikelihoodConfig::new(k, vec![0.5, 0.5]).unwrap();
    SpatialSwitchingModel::new(2, steps, angles.then_some(ang), hours, &locs, &mesh, preds, vec![0..len], cfg).unwrap()
}

fn spatial_theta(model: &SpatialSwitchingModel) -> Vec<f64> {
    let mut t = vec![(0.3f64).ln(), (2.0f64).ln(), (0.4f64).ln(), (1.5f64).ln()];
    if model.param_dim() > 13 {
        t.extend([0.0, 0.5, 0.0, 1.0]);
    }
    t.extend([-1.5, 0.3, -0.4, -1.0]);
    t.extend([0.0, 0.2, 0.1, -0.3]);
    t
}

#[test]
fn spatial_model_derivatives_match_finite_differences() {
    for angles in [false, true] {
        let model = spatial_model(80, 4, angles);
        let theta = spatial_theta(&model);
        assert_eq!(model.param_dim(), theta.len());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..model.latent_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        check_derivatives(&model, &x, &theta);
    }
}

#[test]
fn zero_field_reduces_to_plain_hmm() {
    let model = spatial_model(60, 6, true);
    let theta = spatial_theta(&model);
    let x = vec![0.0; model.latent_dim()];
    let inputs = model.hmm_inputs(&x, &theta).unwrap();
    let with_field = banded_forward_segments(&inputs.emissions, &inputs.transitions, model.config(), &[0..60]).unwrap();

    let n = 2;
    let mut mats = Vec::new();
    for t in 0..60 {
        let eta12 = -1.5 + periodic_predictor((t % 24) as f64, &[0.3, -0.4]);
        mats.extend(softmax_rows(&[0.0, eta12, -1.0, 0.0], &hmmgf::hmm::StructuralZeros::none(n)).unwrap());
    }
    let plain = TransitionSeq::varying(n, mats).unwrap();
    let emit = LogEmissions::new(n, inputs.emissions.data().to_vec()).unwrap();
    let no_field = banded_forward_segments(&emit, &plain, model.config(), &[0..60]).unwrap();
    assert_eq!(with_field, no_field);
}

fn track_table(len: usize) -> hmmgf::io::DataTable {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let steps: Vec<f64> = (0..len).map(|_| rng.gen_range(0.1..4.0)).collect();
    let xs: Vec<f64> = (0..len).map(|t| (t as f64 * 0.3).cos() * 5.0).collect();
    let ys: Vec<f64> = (0..len).map(|t| (t as f64 * 0.2).sin() * 5.0).collect();
    hmmgf::io::DataTable::new()
        .with_column("step", steps)
        .and_then(|d| d.with_column("x", xs))
        .and_then(|d| d.with_column("y", ys))
        .unwrap()
}

const SPATIAL_JSON: &str = r#"{
  "model": "spatial_switching",
  "n_states": 2,
  "step": { "means": [0.3, 4.0], "sds": [0.5, 3.0] },
  "predictors": [
    { "from": 1, "to": 2, "intercept": -1.0 },
    { "from": 2, "to": 1, "intercept": -1.5, "field": true }
  ],
  "field": { "tau": 1.0, "kappa": 0.2 },
  "mesh": { "nodes_per_side": 6, "margin": 0.05 },
  "bandwidth": 4
}"#;

#[test]
fn spatial_config_builds_with_starting_values() {
    let config = ModelConfig::from_json(SPATIAL_JSON).unwrap();
    assert_eq!(config.n_states(), 2);
    assert_eq!(config.bandwidth(), 4);
    let cfg = config.banded_config().unwrap();
    let model = build_joint_nll(&config, &track_table(50), None, &cfg).unwrap();
    assert_eq!(model.latent_dim(), 36);
    let theta = model.initial_theta();
    let names = model.param_names();
    assert_eq!(theta.len(), names.len());
    let at = |n: &str| theta[names.iter().position(|m| m == n).unwrap()];
    assert!((at("mean2") - 4.0f64.ln()).abs() < 1e-15);
    assert!((at("beta0_21") + 1.5).abs() < 1e-15);
    assert!(model.value(&vec![0.0; 36], &theta).unwrap().is_finite());
}

#[test]
fn spatial_config_without_mesh_is_a_config_error() {
    let json = SPATIAL_JSON.replace(r#""mesh": { "nodes_per_side": 6, "margin": 0.05 },"#, "");
    let config = ModelConfig::from_json(&json).unwrap();
    let cfg = config.banded_config().unwrap();
    let err = build_joint_nll(&config, &track_table(20), None, &cfg).err().unwrap();
    assert!(matches!(err, hmmgf::Error::Config(ref m) if m.contains("mesh")));
}

#[test]
fn signal_config_builds_and_rejects_bad_input() {
    let json = r#"{
      "model": "signal_plus_field",
      "emissions": { "family": "gaussian", "means": [0.0, 2.0], "sds": [1.0, 0.5] },
      "field": { "tau": 1.0, "kappa": 0.5 },
      "transition": [[0.9, 0.1], [0.2, 0.8]],
      "bandwidth": 5
    }"#;
    let config = ModelConfig::from_json(json).unwrap();
    let y: Vec<f64> = (0..40).map(|t| (t as f64 * 0.4).sin()).collect();
    let data = hmmgf::io::DataTable::new().with_column("y", y).unwrap();
    let model = build_joint_nll(&config, &data, None, &config.banded_config().unwrap()).unwrap();
    assert_eq!(model.latent_dim(), 40);
    assert_eq!(model.n_states(), 2);
    assert!(model.value(&vec![0.0; 40], &model.initial_theta()).unwrap().is_finite());

    let missing = hmmgf::io::DataTable::new().with_column("z", vec![0.0; 5]).unwrap();
    assert!(matches!(
        build_joint_nll(&config, &missing, None, &config.banded_config().unwrap()),
        Err(hmmgf::Error::Config(_))
    ));
    assert!(matches!(ModelConfig::from_json("{\"model\": \"unknown\"}"), Err(hmmgf::Error::Config(_))));
    let bad = json.replace("[0.9, 0.1]", "[0.0, 1.0]");
    let config = ModelConfig::from_json(&bad).unwrap();
    assert!(build_joint_nll(&config, &data, None, &config.banded_config().unwrap()).is_err());
}
