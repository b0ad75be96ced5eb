use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use resflow::network::complexity;
use resflow::pwl::{compile_pwl_with_mask, interpolate};
use resflow::NetworkParams;

fn resflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = resflow(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("exp.cfg");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join("compile_summary.json")).unwrap()).unwrap()
}

#[test]
fn compile_hat_file() {
    let dir = tempfile::tempdir().unwrap();
    let pwl = dir.path().join("hat.json");
    fs::write(
        &pwl,
        r#"{"dim": 1, "h": 0.5, "r": 1.0, "values": [{"vertex": [0], "value": [1.0]}]}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let stdout = run_ok(&[
        "compile",
        "--pwl",
        pwl.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(stdout.lines().count(), 1);
    let s = summary(&out);
    assert!(s["max_deviation"].as_f64().unwrap() <= 1e-9);
    assert_eq!(s["depth"], 3);
    let net = NetworkParams::from_json_slice(&fs::read(out.join("network.json")).unwrap()).unwrap();
    assert_eq!(net.eval(&[0.25]).unwrap(), vec![0.5]);
}

#[test]
fn compile_zero_file_gives_zero_network() {
    let dir = tempfile::tempdir().unwrap();
    let pwl = dir.path().join("zero.json");
    fs::write(&pwl, r#"{"dim": 2, "h": 1.0, "r": 2.0, "values": []}"#).unwrap();
    run_ok(&[
        "compile",
        "--pwl",
        pwl.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let net = NetworkParams::from_json_slice(&fs::read(dir.path().join("network.json")).unwrap())
        .unwrap();
    for i in -30..=30 {
        let x = i as f64 / 10.0;
        assert_eq!(net.eval(&[x, -x / 2.0]).unwrap(), vec![0.0]);
    }
}

#[test]
fn compile_two_dimensional_depth() {
    let dir = tempfile::tempdir().unwrap();
    let pwl = dir.path().join("d2.json");
    fs::write(
        &pwl,
        r#"{"dim": 2, "h": 0.5, "r": 1.0, "values": [
            {"vertex": [0, 0], "value": [1.0]},
            {"vertex": [1, -1], "value": [-2.5]},
            {"vertex": [2, 2], "value": [0.75]}]}"#,
    )
    .unwrap();
    run_ok(&[
        "compile",
        "--pwl",
        pwl.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(summary(dir.path())["depth"], 5);
}

#[test]
fn compile_named_function() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&[
        "compile",
        "--function",
        "poly",
        "--coeffs",
        "0.5,-1,2",
        "--dim",
        "2",
        "--radius",
        "1",
        "--delta",
        "0.5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let s = summary(dir.path());
    assert_eq!(s["output_dim"], 2);
    assert!(s["max_deviation"].as_f64().unwrap() <= 1e-9 * s["scale"].as_f64().unwrap());
}

#[test]
fn malformed_inputs_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let pwl = dir.path().join("bad.json");
    fs::write(&pwl, r#"{"dim": 1, "h": 0.5, "values": [}"#).unwrap();
    let out = resflow(&[
        "compile",
        "--pwl",
        pwl.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = write_config(dir.path(), "n_lst = 4, 8\n");
    assert_eq!(
        resflow(&["convergence", "--config", &cfg]).status.code(),
        Some(2)
    );
    let cfg = write_config(dir.path(), "n_list = 8, 4\n");
    assert_eq!(
        resflow(&["shared", "--config", &cfg]).status.code(),
        Some(2)
    );
    let missing = dir.path().join("nope.cfg");
    assert_eq!(
        resflow(&["complexity", "--config", missing.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn convergence_of_zero_rhs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "rhs = zero\nn_list = 2, 4\nspace_samples = 5\noracle_tol = 1e-9\n",
    );
    let out = dir.path().join("out");
    run_ok(&[
        "convergence",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    for row in csv_rows(&out.join("convergence.csv")) {
        assert!(row[1].parse::<f64>().unwrap() <= 1e-9);
    }
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("convergence_summary.json")).unwrap()).unwrap();
    assert!(summary["slope"].is_null());
}

#[test]
fn convergence_rows_respect_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "rhs = sin_t\nn_list = 4, 8, 16\nspace_samples = 9\n",
    );
    run_ok(&[
        "convergence",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
        "--threads",
        "2",
    ]);
    let rows = csv_rows(&dir.path().join("convergence.csv"));
    assert_eq!(rows.len(), 3);
    for row in rows {
        let (err, bound): (f64, f64) = (row[1].parse().unwrap(), row[2].parse().unwrap());
        assert!(err <= bound, "{err} > {bound}");
        assert_eq!(row[4], "3");
    }
}

#[test]
fn complexity_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n_list = 4, 8, 16, 32\nr_n = 4\n");
    run_ok(&[
        "complexity",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let rows = csv_rows(&dir.path().join("complexity.csv"));
    let neurons: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    for w in neurons.windows(2) {
        assert!(w[1] / w[0] <= 3.0);
    }
    assert!(rows.iter().all(|r| r[3] == "3"));
}

#[test]
fn complexity_single_block_matches_direct_compile() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n_list = 1\nr_n = 1\nblock_eps = 1\n");
    run_ok(&[
        "complexity",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let rows = csv_rows(&dir.path().join("complexity.csv"));
    let sin = |x: &[f64]| vec![x[0].sin()];
    let pwl = interpolate(1, 1, &sin, 1.0, 1.0).unwrap();
    assert!(pwl.stored_vertices() >= 3);
    let (net, mask) = compile_pwl_with_mask(&pwl).unwrap();
    let direct = complexity(&net, Some(&mask));
    assert_eq!(rows[0][2], direct.neurons.to_string());
    assert_eq!(rows[0][4], direct.free_weights.to_string());
}

#[test]
fn complexity_spread_violation_exits_with_4() {
    // a fixed per-block accuracy keeps blocks the same size while n grows
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n_list = 1, 64\nblock_eps = 0.5\nr_n = 2\n");
    let out = resflow(&[
        "complexity",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(csv_rows(&dir.path().join("complexity.csv")).len(), 2);
}

#[test]
fn shared_structure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "space_samples = 11\n");
    run_ok(&[
        "shared",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let rows = csv_rows(&dir.path().join("shared.csv"));
    let ks: Vec<usize> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(ks, vec![2, 4, 8, 16]);
    for r in &rows {
        assert_eq!(r[1], r[0]);
        assert_eq!(r[2], "1");
    }
    let first: f64 = rows[0][3].parse().unwrap();
    let last: f64 = rows[3][3].parse().unwrap();
    assert!(last <= first);

    let cfg = write_config(
        dir.path(),
        "rhs = sin_t\npieces = 3\nk_list = 1, 2\nspace_samples = 5\n",
    );
    run_ok(&[
        "shared",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let rows = csv_rows(&dir.path().join("shared.csv"));
    assert_eq!(rows[1][1], "6");
    assert_eq!(rows[1][2], "3");
}

#[test]
fn same_seed_same_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        run_ok(&[
            "shared",
            "--seed",
            "9",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        run_ok(&[
            "complexity",
            "--seed",
            "9",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
    }
    for name in ["shared.csv", "complexity.csv"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap()
        );
    }
}
