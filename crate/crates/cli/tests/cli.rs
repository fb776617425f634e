use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sbl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbl"))
        .args(args)
        .env_remove("SBL_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn toy(dir: &Path) -> (String, String) {
    let f = dir.join("F.csv");
    let y = dir.join("y.csv");
    fs::write(&f, "1\n").unwrap();
    fs::write(&y, "2\n").unwrap();
    (f.display().to_string(), y.display().to_string())
}

#[test]
fn scalar_toy_with_em_converges_to_three() {
    let dir = tempfile::tempdir().unwrap();
    let (f, y) = toy(dir.path());
    let out = dir.path().join("out");
    let o = sbl(&[
        "solve", "--dict", &f, "--obs", &y, "--beta", "1", "--alg", "em", "--tol", "1e-10",
        "--out", out.to_str().unwrap(), "--format", "json", "-q",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["status"], "converged");
    // y² − 1/β = 3
    let g = v["gamma"][0][1].as_f64().unwrap();
    assert!((g - 3.0).abs() < 1e-6, "{g}");

    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iter,objective,gamma_rel_change,active_count,elapsed_ms\n"));
    let summary = fs::read_to_string(out.join("summary.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(parsed, v);
}

#[test]
fn gamma0_length_mismatch_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let (f, y) = toy(dir.path());
    let g0 = dir.path().join("g0.csv");
    fs::write(&g0, "1\n1\n").unwrap();
    let o = sbl(&[
        "solve", "--dict", &f, "--obs", &y, "--beta", "1", "--gamma0", g0.to_str().unwrap(),
        "--out", dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("g0.csv"));
}

#[test]
fn missing_file_and_bad_algorithm_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let (f, y) = toy(dir.path());
    let out = dir.path().join("out");
    let o = sbl(&["solve", "--dict", "/nonexistent.csv", "--obs", &y, "--beta", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = sbl(&["solve", "--dict", &f, "--obs", &y, "--beta", "1", "--alg", "xyz", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn rates_table_marks_unestimable_rows() {
    let o = sbl(&["rates", "-q"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("alg,r,p_theory,zeta_theory,p_est,zeta_est,regime"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().any(|r| r.starts_with("em,2,") && r.contains("NA,NA")));
    let mk4 = rows.iter().find(|r| r.starts_with("mk,4,")).unwrap();
    let zeta: f64 = mk4.split(',').nth(5).unwrap().parse().unwrap();
    assert!((zeta - 0.25).abs() < 1e-3);
}

#[test]
fn denoise1d_prints_trajectory() {
    let o = sbl(&["denoise1d", "--alg", "em", "--y-sq", "4", "--iters", "2"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "iter,gamma,error");
    assert_eq!(rows.len(), 4);
    assert!(rows[2].starts_with("1,1.5,"));
}

#[test]
fn experiment_is_deterministic_and_panels_emit() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"name":"t","dictionary":"partial_dct","m":16,"n":32,
            "sparsity_percents":[20],"noise":[{"beta":1.0}],
            "algorithms":["em","amq"],"config":{"max_iters":60}}"#,
    )
    .unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = sbl(&["experiment", "--config", spec.to_str().unwrap(), "--seed", "5", "--out", out.to_str().unwrap(), "-q"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 3);
    for name in &names {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name:?}");
    }

    let panels = dir.path().join("panels");
    let o = sbl(&["emit-plot-data", a.to_str().unwrap(), "--out", panels.to_str().unwrap(), "-q"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files: Vec<_> = fs::read_dir(&panels).unwrap().collect();
    assert_eq!(files.len(), 1);
}

#[test]
fn emit_plot_data_on_empty_directory_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = sbl(&["emit-plot-data", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
