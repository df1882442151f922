use std::process::Command;

fn vbocp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vbocp"))
}

fn small_config(dir: &std::path::Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{"h": 0.1, "n_train": 10, "n_train_geor": 10, "n_test": 3, "n_deim_train": 20,
            "n_list": [3, 6], "speedup_n": 6, "timing_repeats": 3, "timing_discard": 1}"#,
    )
    .unwrap();
    path
}

#[test]
fn mesh_and_hf_solve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mesh = dir.path().join("mesh.txt");
    let out = vbocp().arg("--config").arg(&cfg).arg("mesh").arg("--out").arg(&mesh).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(vbocp::mesh::load_mesh(&mesh).is_ok());

    let hf = dir.path().join("hf");
    let out = vbocp()
        .args(["--config", cfg.to_str().unwrap(), "hf-solve", "--mu1", "12", "--mu2", "1", "--muu", "0.3", "--out"])
        .arg(&hf)
        .output()
        .unwrap();
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(hf.join("solution.json")).unwrap()).unwrap();
    assert!(summary["residual"].as_f64().unwrap() < 1e-10);
}

#[test]
fn offline_then_online() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let model = dir.path().join("model");
    let status = vbocp()
        .args(["--config", cfg.to_str().unwrap(), "offline", "--strategy", "geor", "-n", "4", "--out"])
        .arg(&model)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(model.join("Q.mat").exists() && model.join("theta.json").exists());
    let out = vbocp()
        .args(["--config", cfg.to_str().unwrap(), "online", "--strategy", "geor", "--model"])
        .arg(&model)
        .args(["--mu1", "8", "--mu2", "2", "--muu", "0.6", "--compare"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("E_y ="));
}

#[test]
fn stability_csv_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = vbocp()
        .args(["--config", cfg.to_str().unwrap(), "stability", "--samples", "2", "--seed", "3"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "mu1,mu2,muu,gamma_a,gamma_T,C_omega,beta_lb,beta_h,ok");
    assert_eq!(lines.filter(|l| l.ends_with(",true")).count(), 2);
}

#[test]
fn bench_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out_dir = dir.path().join("out");
    let status = vbocp().arg("--config").arg(&cfg).arg("bench").arg("--out").arg(&out_dir).status().unwrap();
    assert!(status.success());
    let errors = std::fs::read_to_string(out_dir.join("errors.csv")).unwrap();
    assert!(errors.starts_with("strategy,N,E_y,E_p"));
    assert_eq!(errors.lines().count(), 1 + 4 * 2);
    for f in ["report.json", "timings.csv", "eig_geor_y.csv", "eig_lpod_p.csv"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
}

#[test]
fn rejects_bad_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"mu1_range": [5, 1]}"#).unwrap();
    let out = vbocp().arg("--config").arg(&cfg).arg("mesh").output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("mu1_range"));
}
