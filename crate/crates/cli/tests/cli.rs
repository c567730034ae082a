use std::process::{Command, Output};

use serde_json::Value;

fn wd(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wd"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("WD_THREADS", t),
        None => cmd.env_remove("WD_THREADS"),
    };
    cmd.output().expect("wd runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn chern_of_both_haldane_phases() {
    let out = wd(&["chern", "--model", "haldane", "--param", "M=0", "--mesh", "16"], None);
    assert_eq!(out.status.code(), Some(0));
    let j = json(&out);
    assert_eq!(j["chern_int"], -1);
    assert_eq!(j["schema"], 1);
    assert_eq!(j["params"]["t2"], 0.1);
    let out = wd(&["chern", "--model", "haldane", "--param", "M=1.0", "--mesh", "16"], None);
    assert_eq!(json(&out)["chern_int"], 0);
}

#[test]
fn gap_closures_exit_2() {
    let out = wd(&["gap", "--model", "hofstadter", "--param", "p=1", "--param", "q=2", "--mesh", "16"], None);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["gapped"], false);
    let boundary = format!("M={}", 3.0 * 3f64.sqrt() * 0.1);
    let out = wd(&["dichotomy", "--model", "haldane", "--param", &boundary, "--mesh", "32"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn config_errors_exit_1() {
    for args in [
        &["chern", "--model", "hofstadter", "--param", "p=2", "--param", "q=4"][..],
        &["chern", "--mesh", "15"],
        &["chern", "--model", "graphene"],
        &["chern", "--param", "M"],
        &["chern", "--param", "mseh=16"],
        &["chern", "--model", "hofstadter", "--param", "M=1"],
        &["chern", "--param", "L=64", "--mesh", "16"],
        &["nonsense"],
        &["chern", "--config", "/nonexistent/wd.cfg"],
    ] {
        assert_eq!(wd(args, None).status.code(), Some(1), "{args:?}");
    }
    assert_eq!(wd(&["gap"], Some("zero")).status.code(), Some(1));
}

#[test]
fn config_file_and_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# trivial phase\nmodel = haldane\n[params]\nM = 1.0\n[tolerances]\ngap = 1e-6\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = wd(&["chern", "--config", cfg.to_str().unwrap(), "--mesh", "16", "--out", out_dir.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let written = std::fs::read(out_dir.join("chern.json")).unwrap();
    assert_eq!(written, out.stdout);
    let csv = std::fs::read_to_string(out_dir.join("curvature.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("k1,k2,omega"));
    assert_eq!(csv.lines().count(), 1 + 16 * 16);

    let out = wd(&["gap", "--config", cfg.to_str().unwrap(), "--mesh", "16", "--format", "csv"], None);
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("min_gap_mesh,"));
}

#[test]
fn output_is_byte_identical_across_runs_and_threads() {
    for cmd in ["chern", "dichotomy", "galerkin"] {
        let args = [cmd, "--model", "haldane", "--param", "M=1", "--mesh", "32"];
        let a = wd(&args, Some("1"));
        let b = wd(&args, Some("4"));
        let c = wd(&args, None);
        assert_eq!(a.status.code(), Some(0), "{cmd}");
        assert_eq!(b.status.code(), Some(0), "{cmd}");
        assert_eq!(a.stdout, b.stdout, "{cmd}");
        assert_eq!(a.stdout, c.stdout, "{cmd}");
    }
}

#[test]
fn frame_and_wannier_reports() {
    let out = wd(&["frame", "--model", "haldane", "--param", "M=0", "--mesh", "16"], None);
    assert_eq!(out.status.code(), Some(0));
    let j = json(&out);
    assert!(j["frame"]["vertex_residual"].as_f64().unwrap() < 1e-6);
    assert!(j["frame"]["smoothed"].is_null());
    assert!(j["frame"]["smoothing_obstruction"].is_string());
    assert_eq!(j["hs_table"].as_array().unwrap().len(), 3 * 3);

    let out = wd(&["wannier", "--model", "haldane", "--param", "M=1", "--mesh", "16"], None);
    assert_eq!(out.status.code(), Some(0));
    let j = json(&out);
    assert_eq!(j["L"], 8);
    assert!((j["mass"][0].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn inconclusive_dichotomy_still_reports() {
    // L in {2, 4, 8}: the second moment has not settled to 1% yet.
    let out = wd(&["dichotomy", "--model", "haldane", "--param", "M=1", "--mesh", "16"], None);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out)["classification"], "INCONCLUSIVE");
}

#[test]
fn constant_matrixfile_has_zero_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("flat.txt");
    std::fs::write(&file, "# diag(-1, 1)\n0 0 0 0 -1 0\n0 0 1 1 1 0\n").unwrap();
    let param = format!("file={}", file.display());
    let out = wd(&["frame", "--model", "matrixfile", "--param", &param, "--mesh", "8"], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let f = &json(&out)["frame"];
    for key in ["vertex_residual", "edge_residual"] {
        assert_eq!(f[key], 0.0, "{key}");
    }
    assert_eq!(f["radial"]["orthonormality"], 0.0);
}
