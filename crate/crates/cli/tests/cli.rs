use std::path::Path;
use std::process::{Command, Output};

fn hmmgf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmmgf")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut rdr = csv::Reader::from_path(p).unwrap();
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr.records().map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = hmmgf(&["simulate", "--length", "100", "--seed", "7", "--out", path(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["data.csv", "truth.csv", "mesh.txt", "config.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (header, rows) = read_csv(&a.join("data.csv"));
    assert_eq!(header, ["t", "step", "angle", "x", "y", "true_state"]);
    assert_eq!(rows.len(), 100);
    assert!(rows.iter().all(|r| r[1] > 0.0 && (r[5] == 1.0 || r[5] == 2.0)));
    let other = dir.path().join("c");
    hmmgf(&["simulate", "--length", "100", "--seed", "8", "--out", path(&other)]);
    assert_ne!(std::fs::read(a.join("data.csv")).unwrap(), std::fs::read(other.join("data.csv")).unwrap());
}

#[test]
fn bench_bandwidth_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = hmmgf(&["bench-bandwidth", "--length", "400", "--bandwidth", "2,5,10", "--out", path(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&dir.path().join("decay.csv"));
    assert_eq!(header, ["k", "error", "theorem_bound"]);
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), vec![2.0, 5.0, 10.0, 400.0]);
    assert!(rows.iter().all(|r| r[1] <= r[2]));
    assert!(rows[3][1] <= 1e-12);
}

#[test]
fn spatial_fit_without_mesh_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(hmmgf(&["simulate", "--length", "50", "--out", path(&sim)]).status.success());
    let o = hmmgf(&[
        "fit",
        "--config",
        path(&sim.join("config.json")),
        "--data",
        path(&sim.join("data.csv")),
        "--out",
        path(&dir.path().join("fit")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("configuration error") && err.contains("mesh"), "{err}");
}

#[test]
fn unknown_subcommand_fails() {
    assert!(!hmmgf(&["frobnicate"]).status.success());
}

#[test]
fn fit_decode_round_trip_with_bandwidth_check() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(hmmgf(&["simulate", "--length", "400", "--seed", "3", "--mesh-nodes", "8", "--out", path(&sim)])
        .status
        .success());
    let model = |cmd: &str, out: &Path| -> Vec<String> {
        [
            cmd,
            "--config",
            path(&sim.join("config.json")),
            "--data",
            path(&sim.join("data.csv")),
            "--mesh",
            path(&sim.join("mesh.txt")),
            "--bandwidth",
            "5",
            "--out",
            path(out),
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    };
    let fit_dir = dir.path().join("fit");
    let mut args = model("fit", &fit_dir);
    args.extend(["--bandwidth-check".into(), "5".into()]);
    let o = Command::new(env!("CARGO_BIN_EXE_hmmgf")).args(&args).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(fit_dir.join("fit.json")).unwrap()).unwrap();
    assert_eq!(report["converged"], true);
    assert_eq!(report["bandwidth"], 5);
    assert_eq!(report["bandwidth_check"]["bandwidth"], 10);
    assert!(report["bandwidth_check"]["max_relative_change"].as_f64().unwrap() < 0.5);
    let names: Vec<&str> =
        report["parameters"].as_array().unwrap().iter().map(|p| p["name"].as_str().unwrap()).collect();
    assert_eq!(&names[..4], ["mean1", "mean2", "sd1", "sd2"]);
    for p in report["parameters"].as_array().unwrap() {
        if p["name"].as_str().unwrap().starts_with("sd") {
            assert!((p["estimate"].as_f64().unwrap() - p["working"].as_f64().unwrap().exp()).abs() < 1e-12);
        }
    }

    let dec_dir = dir.path().join("decode");
    let mut args = model("decode", &dec_dir);
    args.extend(["--fit".into(), path(&fit_dir.join("fit.json")).into()]);
    let o = Command::new(env!("CARGO_BIN_EXE_hmmgf")).args(&args).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read(fit_dir.join("decoded.csv")).unwrap(),
        std::fs::read(dec_dir.join("decoded.csv")).unwrap()
    );
    let (header, rows) = read_csv(&dec_dir.join("decoded.csv"));
    assert_eq!(header, ["t", "state", "p1", "p2"]);
    assert_eq!(rows.len(), 400);
    assert!(rows.iter().all(|r| (r[2] + r[3] - 1.0).abs() < 1e-9));
    // decoded states agree with the truth most of the time
    let (_, truth) = read_csv(&sim.join("data.csv"));
    let agree = rows.iter().zip(&truth).filter(|(d, t)| d[1] == t[5]).count();
    assert!(agree as f64 > 0.8 * 400.0, "{agree}");
}
