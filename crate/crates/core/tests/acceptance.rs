//! End-to-end acceptance checks. Runs sequentially and prints one
//! `PASS`/`FAIL` line per criterion; exits non-zero if any fails.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use hmmgf::hmm::{
    banded_forward, forward_recursion, local_state_probabilities, periodic_stationary, stationary_distribution,
    viterbi, BandedLikelihoodConfig, LogEmissions, Predictors, StructuralZeros, TransitionModel, TransitionSeq,
};
use hmmgf::laplace::{dense_fd_hessian, fit, laplace_nll, sample_gaussian, FitOptions};
use hmmgf::models::{SignalEmissions, SignalPlusFieldModel};
use hmmgf::sim::{
    fit_a3_replicate, log_error_slope, run_a3_experiment, verify_decay, A3FitOptions, A3Protocol, A3Replicate,
    DecayBoundConfig, GaussianHmm,
};
use hmmgf::sparse::{cholesky, Ordering};
use hmmgf::spde::{
    assemble_1d, assemble_2d, build_precision, gmrf_logdensity, oscillating_covariance, Mesh1D, PrecisionSpec,
    SpdeOperator, TriMesh,
};
use nalgebra::{DMatrix, DVector};
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, MultivariateNormal};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, format!("took {:.1} s, limit {:.0} s", elapsed.as_secs_f64(), limit.as_secs_f64()))
}

fn random_row(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> Vec<f64> {
    let r: Vec<f64> = (0..n).map(|_| floor + rng.gen::<f64>()).collect();
    let s: f64 = r.iter().sum();
    r.iter().map(|v| v / s).collect()
}

fn banded_exact() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for m in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + m);
        let n = 2 + (m % 2) as usize;
        let len = 200;
        let le: Vec<f64> = (0..n * len).map(|_| rng.gen_range(-6.0..2.0)).collect();
        let mats: Vec<f64> = (0..len * n).flat_map(|_| random_row(&mut rng, n, 0.0)).collect();
        let delta = random_row(&mut rng, n, 0.1);
        let emit = LogEmissions::new(n, le).map_err(|e| e.to_string())?;
        let trans = TransitionSeq::varying(n, mats).map_err(|e| e.to_string())?;
        let exact = forward_recursion(&emit, &trans, &delta).map_err(|e| e.to_string())?.loglik;
        let cfg = BandedLikelihoodConfig::new(len, delta.clone()).map_err(|e| e.to_string())?;
        let banded = banded_forward(&emit, &trans, &cfg).map_err(|e| e.to_string())?;
        worst = worst.max((exact - banded).abs());
    }
    check(worst <= 1e-12, format!("max |exact − banded| = {worst:e}"))?;
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("50 models, max |exact − banded| = {worst:.1e}, {:.2} s", start.elapsed().as_secs_f64()))
}

fn geometric_decay() -> Outcome {
    let start = Instant::now();
    let hmm = GaussianHmm::two_state(0.9, 2.0);
    let (y, _) = hmm.simulate(1000, 1).map_err(|e| e.to_string())?;
    let emit = hmm.log_emissions(&y).map_err(|e| e.to_string())?;
    let trans = hmm.transitions().map_err(|e| e.to_string())?;
    let bound = DecayBoundConfig::from_model(&emit, &trans).map_err(|e| e.to_string())?;
    let ks = [2, 5, 10, 15, 20, 25];
    let rows = verify_decay(&emit, &trans, &hmm.delta, &ks, &bound).map_err(|e| e.to_string())?;
    for w in rows.windows(2) {
        check(w[1].error <= w[0].error.max(1e-12), format!("error rises from k = {} to k = {}", w[0].k, w[1].k))?;
    }
    for r in &rows {
        check(r.error <= r.bound, format!("k = {}: error {:e} above bound {:e}", r.k, r.error, r.bound))?;
    }
    let slope = log_error_slope(&rows, 1e-12).ok_or("fewer than two errors above the floor")?;
    check(slope <= -0.05, format!("log-error slope {slope:.3}"))?;
    within(start.elapsed(), Duration::from_secs(10))?;
    let errs: Vec<String> = rows.iter().map(|r| format!("{}:{:.1e}", r.k, r.error)).collect();
    Ok(format!(
        "errors {}, slope {slope:.3}, rho {:.6}, {:.2} s",
        errs.join(" "),
        bound.rho(),
        start.elapsed().as_secs_f64()
    ))
}

fn signal_series(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = 0;
    (0..len)
        .map(|t| {
            if rng.gen::<f64>() < 0.02 {
                state = 1 - state;
            }
            0.5 * (t as f64 * 0.1).sin() + 0.8 * state as f64 + rng.gen_range(-1.0..1.0)
        })
        .collect()
}

/// Two-state Gaussian signal model; θ = (μ, ln τ, ln κ, μ₂, ln σ₁, ln σ₂, η₁₂, η₂₁).
fn signal_model(y: &[f64], k: usize) -> hmmgf::Result<SignalPlusFieldModel> {
    let len = y.len();
    let times: Vec<f64> = (0..len).map(|t| t as f64).collect();
    let cfg = BandedLikelihoodConfig::uniform(k, 2)?;
    SignalPlusFieldModel::new(&times, y.to_vec(), vec![0..len], SignalEmissions::Gaussian { n_states: 2 }, false, cfg)
}

fn hessian_band() -> Outcome {
    let start = Instant::now();
    let (len, k) = (60, 5);
    let y = signal_series(len, 4);
    let theta =
        [0.0, 0.0, (0.3f64).ln(), 0.8, (0.6f64).ln(), (0.6f64).ln(), (0.02f64 / 0.98).ln(), (0.02f64 / 0.98).ln()];
    let x: Vec<f64> = y.iter().map(|v| 0.4 * v).collect();
    let banded = signal_model(&y, k).map_err(|e| e.to_string())?;
    let exact = signal_model(&y, len).map_err(|e| e.to_string())?;
    let step = 1e-2;
    let hb = dense_fd_hessian(&banded, &x, &theta, step).map_err(|e| e.to_string())?;
    let he = dense_fd_hessian(&exact, &x, &theta, step).map_err(|e| e.to_string())?;
    let mut off_block = 0.0f64;
    let mut far = 0.0f64;
    for i in 0..len {
        for j in 0..len {
            if (i / k).abs_diff(j / k) >= 2 {
                off_block = off_block.max(hb[i][j].abs());
            }
            if i.abs_diff(j) > 15 {
                far = far.max(he[i][j].abs());
            }
        }
    }
    check(off_block < 1e-8, format!("banded entry {off_block:e} two or more blocks apart"))?;
    check(far > 1e-4, format!("exact variant has no entry above 1e-4 beyond half-width 15 (max {far:e})"))?;
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "max banded entry across ≥ 2 blocks {off_block:.1e}, max exact entry beyond 15 {far:.1e}, {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

/// Dense `N(μ1, Q⁻¹ + σ²I)` negative log-likelihood; θ = (μ, ln τ, ln κ, ln σ).
fn closed_form_nll(y: &[f64], theta: &[f64]) -> f64 {
    let len = y.len();
    let (mu, tau, kappa, sd) = (theta[0], theta[1].exp(), theta[2].exp(), theta[3].exp());
    let mesh = Mesh1D::new((0..len).map(|t| t as f64).collect()).unwrap();
    let q = SpdeOperator::new(&assemble_1d(&mesh).unwrap()).unwrap().precision_with(tau, kappa, 1.0).to_dense();
    let q = DMatrix::from_fn(len, len, |i, j| q[i][j]);
    let cov = q.try_inverse().unwrap() + DMatrix::identity(len, len) * (sd * sd);
    let r = DVector::from_iterator(len, y.iter().map(|v| v - mu));
    let Some(chol) = cov.cholesky() else { return f64::INFINITY };
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    0.5 * (len as f64 * (2.0 * PI).ln() + logdet + r.dot(&chol.solve(&r)))
}

/// Damped Newton on the closed form with difference derivatives.
fn closed_form_optimum(y: &[f64], start: &[f64]) -> Vec<f64> {
    let f = |t: &[f64]| closed_form_nll(y, t);
    let p = start.len();
    let h = 1e-4;
    let grad = |t: &[f64]| -> Vec<f64> {
        (0..p)
            .map(|i| {
                let (mut a, mut b) = (t.to_vec(), t.to_vec());
                a[i] += h;
                b[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect()
    };
    let mut t = start.to_vec();
    for _ in 0..200 {
        let g = grad(&t);
        if g.iter().all(|v| v.abs() < 1e-7) {
            break;
        }
        let hs = 1e-3;
        let hess = DMatrix::from_fn(p, p, |i, j| {
            let (mut a, mut b) = (t.clone(), t.clone());
            a[j] += hs;
            b[j] -= hs;
            (grad(&a)[i] - grad(&b)[i]) / (2.0 * hs)
        });
        let hess = (&hess + hess.transpose()) * 0.5;
        let gv = DVector::from_vec(g.clone());
        let dir = match hess.clone().cholesky() {
            Some(c) => -c.solve(&gv),
            None => -gv.clone(),
        };
        let f0 = f(&t);
        let mut s = 1.0;
        loop {
            let trial: Vec<f64> = t.iter().zip(dir.iter()).map(|(a, d)| a + s * d).collect();
            if f(&trial) <= f0 + 1e-4 * s * gv.dot(&dir) || s < 1e-10 {
                t = trial;
                break;
            }
            s *= 0.5;
        }
    }
    t
}

fn laplace_gaussian() -> Outcome {
    let start = Instant::now();
    let len = 200;
    let mesh = Mesh1D::new((0..len).map(|t| t as f64).collect()).map_err(|e| e.to_string())?;
    let q = build_precision(&assemble_1d(&mesh).map_err(|e| e.to_string())?, &PrecisionSpec::matern(0.8, 0.15))
        .map_err(|e| e.to_string())?;
    let field = sample_gaussian(&q, &vec![0.0; len], 1, 21).map_err(|e| e.to_string())?.remove(0);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let normal = rand_distr::Normal::new(0.0, 0.4).unwrap();
    let y: Vec<f64> = field.iter().map(|x| 0.5 + x + rng.sample(normal)).collect();
    let times: Vec<f64> = (0..len).map(|t| t as f64).collect();
    let cfg = BandedLikelihoodConfig::new(5, vec![1.0]).map_err(|e| e.to_string())?;
    let model = SignalPlusFieldModel::new(
        &times,
        y.clone(),
        vec![0..len],
        SignalEmissions::Gaussian { n_states: 1 },
        false,
        cfg,
    )
    .map_err(|e| e.to_string())?;

    let mut worst = 0.0f64;
    for theta in [[0.0, 0.0, -1.0, 0.0], [0.4, -0.3, -2.0, -1.0], [1.0, 0.5, 0.2, -0.5]] {
        let (v, _) = laplace_nll(&model, &theta, &vec![0.0; len]).map_err(|e| e.to_string())?;
        worst = worst.max((v - closed_form_nll(&y, &theta)).abs());
    }
    check(worst <= 1e-8, format!("|Laplace − closed form| = {worst:e}"))?;

    let theta0 = [0.0, 0.0, -1.0, 0.0];
    let opts = FitOptions { joint_precision: false, ..FitOptions::default() };
    let r = fit(&model, &theta0, &opts).map_err(|e| e.to_string())?;
    check(r.diagnostics.converged, format!("fit did not converge: {}", r.diagnostics.message))?;
    let fitted = start.elapsed();
    let oracle_start = Instant::now();
    let oracle = closed_form_optimum(&y, &theta0);
    let oracle_time = oracle_start.elapsed().as_secs_f64();
    let natural = |t: &[f64]| [t[0], t[3].exp(), t[1].exp(), t[2].exp()];
    let (a, b) = (natural(&r.theta_hat), natural(&oracle));
    let dev = a.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    check(dev <= 1e-4, format!("fitted (μ, σ, τ, κ) {a:?} vs closed-form optimum {b:?}"))?;
    within(fitted, Duration::from_secs(60))?;
    Ok(format!(
        "max |Laplace − closed form| = {worst:.1e}, max parameter deviation {dev:.1e} at (μ, σ, τ, κ) = ({:.4}, {:.4}, {:.4}, {:.4}), {:.1} s (dense oracle {oracle_time:.1} s)",
        a[0],
        a[1],
        a[2],
        a[3],
        fitted.as_secs_f64()
    ))
}

fn fem_hand() -> Outcome {
    let fem = assemble_1d(&Mesh1D::new(vec![0.0, 1.0, 2.0]).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    check(fem.c_lumped == [0.5, 1.0, 0.5], format!("1D lumped mass {:?}", fem.c_lumped))?;
    let g = [[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]];
    check(fem.g.to_dense() == g, format!("1D stiffness {:?}", fem.g.to_dense()))?;

    let tri = TriMesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).map_err(|e| e.to_string())?;
    let fem = assemble_2d(&tri).map_err(|e| e.to_string())?;
    let c = [
        [1.0 / 12.0, 1.0 / 24.0, 1.0 / 24.0],
        [1.0 / 24.0, 1.0 / 12.0, 1.0 / 24.0],
        [1.0 / 24.0, 1.0 / 24.0, 1.0 / 12.0],
    ];
    let g = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
    check(fem.c.to_dense() == c, format!("2D mass {:?}", fem.c.to_dense()))?;
    check(fem.g.to_dense() == g, format!("2D stiffness {:?}", fem.g.to_dense()))?;
    check(fem.c_lumped == [1.0 / 6.0; 3], format!("2D lumped mass {:?}", fem.c_lumped))?;
    Ok("1D and 2D element matrices reproduced exactly".into())
}

fn gmrf_density() -> Outcome {
    let mesh = TriMesh::regular_grid(0.0, 9.0, 0.0, 4.0, 10, 5).map_err(|e| e.to_string())?;
    let q = build_precision(&assemble_2d(&mesh).map_err(|e| e.to_string())?, &PrecisionSpec::matern(1.5, 0.8))
        .map_err(|e| e.to_string())?;
    let l = q.dim();
    check(l == 50, format!("dimension {l}"))?;
    let dense = DMatrix::from_fn(l, l, |i, j| q.get(i, j));
    let cov = dense.try_inverse().ok_or("precision not invertible")?;
    let cov = (&cov + cov.transpose()) * 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mu: Vec<f64> = (0..l).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..l).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mvn = MultivariateNormal::new(mu.clone(), cov.iter().cloned().collect()).map_err(|e| e.to_string())?;
        let oracle = mvn.ln_pdf(&DVector::from_vec(x.clone()));
        let v = gmrf_logdensity(&x, &mu, &q).map_err(|e| e.to_string())?;
        worst = worst.max((v - oracle).abs());
    }
    check(worst <= 1e-10, format!("max |GMRF − dense| = {worst:e}"))?;
    Ok(format!("20 points, max |GMRF − dense MVN| = {worst:.1e}"))
}

fn oscillating_kernel() -> Outcome {
    let start = Instant::now();
    let (kappa, omega) = (7.0, 0.98);
    let mesh = Mesh1D::uniform(0.0, 100.0, 0.05).map_err(|e| e.to_string())?;
    let q = build_precision(
        &assemble_1d(&mesh).map_err(|e| e.to_string())?,
        &PrecisionSpec::oscillating(1.0, kappa, omega),
    )
    .map_err(|e| e.to_string())?;
    let factor = cholesky(&q, Ordering::Natural).map_err(|e| e.to_string())?;
    let l = q.dim();
    let c0 = oscillating_covariance(0.0, 0.0, kappa, omega);
    let (mut rel0, mut worst) = (0.0f64, 0.0f64);
    let mut sign_change = false;
    for centre in [l / 4, l / 2, 3 * l / 4] {
        let mut e = vec![0.0; l];
        e[centre] = 1.0;
        let z = factor.solve(&e).map_err(|e| e.to_string())?;
        rel0 = rel0.max((z[centre] - c0).abs() / c0);
        for lag in 1..=40 {
            let target = oscillating_covariance(0.0, 0.05 * lag as f64, kappa, omega);
            for v in [z[centre + lag], z[centre - lag]] {
                worst = worst.max((v - target).abs() / c0);
            }
            sign_change |= z[centre + lag].signum() != z[centre + lag - 1].signum();
        }
    }
    check(rel0 <= 0.05, format!("lag-0 relative error {rel0:.3}"))?;
    check(worst <= 0.10, format!("error {worst:.3} of the lag-0 value"))?;
    check(sign_change, "no sign change up to lag 2".into())?;
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "lag-0 relative error {rel0:.4}, worst error {worst:.4} of lag-0 value, sign change present, {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn cpu_seconds() -> f64 {
    // utime + stime of this process, in clock ticks
    std::fs::read_to_string("/proc/self/stat")
        .ok()
        .and_then(|s| {
            let rest = s.rsplit_once(") ")?.1.split_whitespace().map(String::from).collect::<Vec<_>>();
            Some((rest[11].parse::<f64>().ok()? + rest[12].parse::<f64>().ok()?) / 100.0)
        })
        .unwrap_or(f64::NAN)
}

fn a3_experiment(first: &mut Option<A3Replicate>) -> Outcome {
    let protocol = A3Protocol::default();
    let opts = A3FitOptions::default();
    let (wall, cpu) = (Instant::now(), cpu_seconds());
    let rows = run_a3_experiment(&protocol, &opts);
    let (wall, cpu) = (wall.elapsed().as_secs_f64(), cpu_seconds() - cpu);
    let mut ok = Vec::new();
    for (r, _, _, res) in rows {
        match res {
            Ok(x) => ok.push(x),
            Err(e) => return Err(format!("replicate {r} failed: {e}")),
        }
    }
    let converged = ok.iter().filter(|x| x.converged).count();
    let corr = median(ok.iter().map(|x| x.metrics.correlation21).collect());
    let rmse12 = median(ok.iter().map(|x| x.metrics.rmse12).collect());
    let rmse21 = median(ok.iter().map(|x| x.metrics.rmse21).collect());
    let eta12 = median(ok.iter().map(|x| x.metrics.mean_eta12_diff.abs()).collect());
    let eta21 = median(ok.iter().map(|x| x.metrics.mean_eta21_diff.abs()).collect());
    *first = ok.iter().find(|x| x.replicate == 0).cloned();
    let projected = cpu / 60.0 / 8.0;
    let summary = format!(
        "{} replicates ({converged} converged), median corr21 {corr:.3}, rmse12 {rmse12:.3}, rmse21 {rmse21:.3}, |eta12 diff| {eta12:.3}, |eta21 diff| {eta21:.3}; wall {:.1} min on {} threads, CPU {:.1} min, projected {projected:.1} min on 8 cores",
        ok.len(),
        wall / 60.0,
        rayon::current_num_threads(),
        cpu / 60.0
    );
    check(ok.len() == protocol.replicates, format!("only {} replicates; {summary}", ok.len()))?;
    check(corr >= 0.80 && rmse12 <= 0.10 && rmse21 <= 0.18 && eta12 <= 0.5 && eta21 <= 0.5, summary.clone())?;
    check(projected < 45.0, format!("runtime above target; {summary}"))?;
    Ok(summary)
}

fn natural(name: &str, working: f64) -> f64 {
    if ["mean", "sd", "tau", "kappa"].iter().any(|p| name.starts_with(p)) {
        working.exp()
    } else {
        working
    }
}

fn bandwidth_insensitivity(k15: Option<A3Replicate>) -> Outcome {
    let start = Instant::now();
    let protocol = A3Protocol::default();
    let opts = A3FitOptions::default();
    let len = protocol.lengths[0];
    let k15 = match k15 {
        Some(r) => r,
        None => fit_a3_replicate(&protocol, len, 15, 0, &opts).map_err(|e| e.to_string())?,
    };
    let k10 = fit_a3_replicate(&protocol, len, 10, 0, &opts).map_err(|e| e.to_string())?;
    let mut worst = (0.0f64, String::new());
    let fixed = ["mean1", "mean2", "sd1", "sd2", "beta0_12", "beta0_21"];
    for name in fixed {
        let a = natural(name, k15.estimate(name).ok_or("missing estimate")?);
        let b = natural(name, k10.estimate(name).ok_or("missing estimate")?);
        let rel = (a - b).abs() / a.abs().max(b.abs());
        if rel > worst.0 {
            worst = (rel, format!("{name}: {a:.6} (k = 15) vs {b:.6} (k = 10)"));
        }
    }
    let mut hyper = 0.0f64;
    for name in k15.names.iter().filter(|n| !fixed.contains(&n.as_str())) {
        let a = natural(name, k15.estimate(name).unwrap());
        let b = natural(name, k10.estimate(name).unwrap());
        hyper = hyper.max((a - b).abs() / a.abs().max(b.abs()));
    }
    check(worst.0 <= 1e-3, format!("largest relative change {:.2e} ({})", worst.0, worst.1))?;
    Ok(format!(
        "largest fixed-effect relative change {:.1e} ({}), field hyperparameters {hyper:.1e}, {:.1} min",
        worst.0,
        worst.1,
        start.elapsed().as_secs_f64() / 60.0
    ))
}

fn periodic_stationarity() -> Outcome {
    let (n, period) = (2, 24);
    let mut eta = Vec::new();
    for t in 0..period {
        let w = 2.0 * PI * t as f64 / period as f64;
        eta.extend([0.0, -2.0 + 1.2 * w.sin(), -1.5 + 0.8 * w.cos(), 0.0]);
    }
    let tm = TransitionModel::new(StructuralZeros::none(n), Predictors::Varying(eta)).map_err(|e| e.to_string())?;
    let rows = periodic_stationary(&tm, period).map_err(|e| e.to_string())?;
    let gammas: Vec<Vec<f64>> = (0..period).map(|t| tm.gamma(t).unwrap()).collect();
    let mut worst = 0.0f64;
    for (t, delta) in rows.iter().enumerate() {
        let mut m = vec![1.0, 0.0, 0.0, 1.0];
        for s in 1..=period {
            let g = &gammas[(t + s) % period];
            m = (0..4).map(|ij| (0..n).map(|k| m[(ij / n) * n + k] * g[k * n + ij % n]).sum()).collect();
        }
        for j in 0..n {
            let v: f64 = (0..n).map(|i| delta[i] * m[i * n + j]).sum();
            worst = worst.max((v - delta[j]).abs());
        }
    }
    check(worst <= 1e-12, format!("residual {worst:e}"))?;
    let g = [0.8, 0.15, 0.05, 0.1, 0.7, 0.2, 0.3, 0.3, 0.4];
    let stat = stationary_distribution(&g, 3).map_err(|e| e.to_string())?;
    let hom = periodic_stationary(&TransitionModel::from_matrix(3, &g).map_err(|e| e.to_string())?, 6)
        .map_err(|e| e.to_string())?;
    let dev = hom.iter().flat_map(|r| r.iter().zip(&stat).map(|(a, b)| (a - b).abs())).fold(0.0, f64::max);
    check(dev <= 1e-12, format!("homogeneous deviation {dev:e}"))?;
    Ok(format!("max residual {worst:.1e}, homogeneous deviation {dev:.1e}"))
}

fn decoding_oracle() -> Outcome {
    let mut runner = TestRunner::new(Config { cases: 200, failure_persistence: None, ..Config::default() });
    let strategy = (1usize..=8, proptest::prelude::any::<u64>());
    runner
        .run(&strategy, |(len, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 2;
            let le: Vec<f64> = (0..n * len).map(|_| rng.gen_range(-4.0..1.0)).collect();
            let mats: Vec<f64> = (0..len * n).flat_map(|_| random_row(&mut rng, n, 0.0)).collect();
            let delta = random_row(&mut rng, n, 0.05);
            let mut paths = Vec::new();
            for code in 0..1usize << len {
                let path: Vec<usize> = (0..len).map(|t| (code >> t) & 1).collect();
                let mut p = delta[path[0]] * le[path[0]].exp();
                for t in 1..len {
                    p *= mats[t * 4 + path[t - 1] * 2 + path[t]] * le[t * n + path[t]].exp();
                }
                paths.push((path, p));
            }
            let total: f64 = paths.iter().map(|p| p.1).sum();
            let best = paths.iter().fold(&paths[0], |b, p| if p.1 > b.1 { p } else { b });
            let emit = LogEmissions::new(n, le.clone()).unwrap();
            let trans = TransitionSeq::varying(n, mats.clone()).unwrap();
            proptest::prop_assert_eq!(&viterbi(&emit, &trans, &delta).unwrap(), &best.0);
            let probs = local_state_probabilities(&emit, &trans, &delta).unwrap();
            for t in 0..len {
                for j in 0..n {
                    let oracle: f64 = paths.iter().filter(|p| p.0[t] == j).map(|p| p.1).sum::<f64>() / total;
                    proptest::prop_assert!((probs[t][j] - oracle).abs() <= 1e-10);
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("200 random 2-state models with T ≤ 8 agree with path enumeration".into())
}

fn cli_binary() -> Result<PathBuf, String> {
    let exe = std::env::current_exe().map_err(|e| e.to_string())?;
    let dir = exe.parent().and_then(Path::parent).ok_or("no target directory")?;
    let bin = dir.join(format!("hmmgf{}", std::env::consts::EXE_SUFFIX));
    let status = Command::new(env!("CARGO"))
        .args(["build", "-q", "-p", "hmmgf-cli"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .status()
        .map_err(|e| e.to_string())?;
    check(status.success() && bin.exists(), format!("could not build {}", bin.display()))?;
    Ok(bin)
}

fn run_cli(bin: &Path, args: &[&str]) -> Result<(), String> {
    let o = Command::new(bin).args(args).output().map_err(|e| e.to_string())?;
    check(
        o.status.code() == Some(0),
        format!("{} exited with {:?}: {}", args[0], o.status.code(), String::from_utf8_lossy(&o.stderr)),
    )
}

fn cli_round_trip() -> Outcome {
    let start = Instant::now();
    let bin = cli_binary()?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let root = tmp.path().join(run);
        let p = |s: &str| root.join(s).to_string_lossy().into_owned();
        run_cli(&bin, &["simulate", "--seed", "12", "--length", "2000", "--out", &p("sim")])?;
        let model = ["--config", &p("sim/config.json"), "--data", &p("sim/data.csv"), "--mesh", &p("sim/mesh.txt")];
        let (fit_out, fit_json, dec_out) = (p("fit"), p("fit/fit.json"), p("decode"));
        let mut fit_args = vec!["fit"];
        fit_args.extend(model);
        fit_args.extend(["--seed", "12", "--out", &fit_out]);
        run_cli(&bin, &fit_args)?;
        let mut dec_args = vec!["decode"];
        dec_args.extend(model);
        dec_args.extend(["--fit", &fit_json, "--out", &dec_out]);
        run_cli(&bin, &dec_args)?;
        let files = [
            "sim/data.csv",
            "sim/truth.csv",
            "sim/mesh.txt",
            "sim/config.json",
            "fit/fit.json",
            "fit/decoded.csv",
            "decode/decoded.csv",
        ];
        let mut bytes = Vec::new();
        for f in files {
            bytes.push((f, std::fs::read(root.join(f)).map_err(|e| format!("{f}: {e}"))?));
        }
        outputs.push(bytes);
    }
    for (f, b) in &outputs[0] {
        if f.ends_with(".json") {
            serde_json::from_slice::<serde_json::Value>(b).map_err(|e| format!("{f} does not parse: {e}"))?;
        }
        if f.ends_with(".csv") {
            let mut rdr = csv::Reader::from_reader(b.as_slice());
            let rows = rdr.records().collect::<Result<Vec<_>, _>>().map_err(|e| format!("{f} does not parse: {e}"))?;
            check(!rows.is_empty(), format!("{f} is empty"))?;
        }
    }
    for ((f, a), (_, b)) in outputs[0].iter().zip(&outputs[1]) {
        check(a == b, format!("{f} differs between runs"))?;
    }
    Ok(format!(
        "simulate, fit and decode exit 0; 7 outputs parse and match byte for byte; {:.1} min",
        start.elapsed().as_secs_f64() / 60.0
    ))
}

fn main() {
    let mut first = None;
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Outcome + '_>)> = vec![
        ("banded-exact equivalence", Box::new(banded_exact)),
        ("geometric decay", Box::new(geometric_decay)),
        ("hessian band structure", Box::new(hessian_band)),
        ("laplace exactness on gaussians", Box::new(laplace_gaussian)),
        ("fem hand calculation", Box::new(fem_hand)),
        ("gmrf density oracle", Box::new(gmrf_density)),
        ("oscillating kernel", Box::new(oscillating_kernel)),
        ("spatial switching experiment", Box::new(|| a3_experiment(&mut first))),
    ];
    let mut failed = 0;
    let mut report = |i: usize, name: &str, out: Outcome| {
        let line = match out {
            Ok(m) => format!("PASS criterion {i} ({name}): {m}"),
            Err(m) => {
                failed += 1;
                format!("FAIL criterion {i} ({name}): {m}")
            }
        };
        let mut so = std::io::stdout().lock();
        let _ = writeln!(so, "{line}");
        let _ = so.flush();
    };
    // ACCEPTANCE_ONLY=1,4,12 restricts the run to the listed criteria
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|c| c.trim().parse().ok()).collect());
    let wanted = |i: usize| only.as_ref().map_or(true, |o| o.contains(&i));
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        if wanted(i + 1) {
            report(i + 1, name, f());
        }
    }
    let rest: Vec<(&str, Box<dyn FnOnce() -> Outcome>)> = vec![
        ("bandwidth insensitivity", Box::new(move || bandwidth_insensitivity(first))),
        ("periodic stationary distribution", Box::new(periodic_stationarity)),
        ("decoding oracle", Box::new(decoding_oracle)),
        ("cli round trip", Box::new(cli_round_trip)),
    ];
    for (i, (name, f)) in rest.into_iter().enumerate() {
        if wanted(i + 9) {
            report(i + 9, name, f());
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
