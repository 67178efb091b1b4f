use std::path::Path;
use std::process::{Command, Output};

fn inhomo(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inhomo"))
        .args(args)
        .current_dir(dir)
        .env_remove("INHOMO_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn column(csv: &str, i: usize) -> Vec<f64> {
    csv.lines().skip(1).map(|l| l.split(',').nth(i).unwrap().parse().unwrap()).collect()
}

#[test]
fn plan_matches_compensation() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&inhomo(&["plan", "--omega", "29", "--delta", "-270", "--eta", "1"], dir.path()));
    assert_eq!(v["omega_r"], 29.0);
    assert_eq!(v["delta_r"], -270.0);
    let v = json(&inhomo(&["plan", "--eta", "1.0192307692307692"], dir.path()));
    assert_eq!(v["omega_r"], 29.2775183);
    assert_eq!(v["delta_r"], -275.192308);
}

#[test]
fn predict_with_measurement_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&inhomo(&["predict", "--omega-r", "29.6", "--delta-r", "-300"], dir.path()));
    assert!((v["beta0"].as_f64().unwrap() - 61.06).abs() < 5e-3);
    assert!((v["beta"].as_f64().unwrap() - 3.13).abs() < 5e-3);
    assert!(v["beta_saturation_form"].is_null());
    let v = json(&inhomo(&["predict", "--gamma-r", "2.875"], dir.path()));
    let (b, s) = (v["beta"].as_f64().unwrap(), v["beta_saturation_form"].as_f64().unwrap());
    assert!((b - s).abs() < 1e-8 * b);
}

#[test]
fn decoupled_n_type_equals_two_level() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("n.toml"),
        "[scheme]\npreset = \"n_type\"\n[scheme.params]\nomega = 0.0\nomega_r = 0.0\ne_branch_to_g = 1.0\n",
    )
    .unwrap();
    let common = ["spectrum", "--nodes", "401", "--from", "-300", "--to", "300", "--points", "13"];
    let n = inhomo(&[&["--config", "n.toml"][..], &common[..]].concat(), dir.path());
    let two = inhomo(&[&["--preset", "two_level"][..], &common[..]].concat(), dir.path());
    assert!(n.status.success() && two.status.success());
    let (a, b) = (column(&stdout(&n), 1), column(&stdout(&two), 1));
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-8 * y, "{x} vs {y}");
    }
}

#[test]
fn spectrum_file_and_sidecar_are_reproducible_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let args = |w: &'static str, out: &'static str| {
        vec!["spectrum", "--nodes", "301", "--from", "-280", "--to", "-260", "--points", "21", "--workers", w, "-o", out]
    };
    assert!(inhomo(&args("1", "a.csv"), dir.path()).status.success());
    assert!(inhomo(&args("3", "b.csv"), dir.path()).status.success());
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.csv")).unwrap());
    assert!(String::from_utf8(a).unwrap().starts_with("probe_detuning_mhz,absorption_norm\n"));
    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["grid_nodes"], 301);
}

#[test]
fn strict_config_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("typo.toml"), "[scheme.params]\nsigmma = 200\n").unwrap();
    let o = inhomo(&["--config", "typo.toml", "plan"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sigmma"));

    std::fs::write(dir.path().join("broken.toml"), "[grid\nnodes = 3\n").unwrap();
    let o = inhomo(&["--config", "broken.toml", "plan"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("broken.toml:1"));

    assert_eq!(inhomo(&["spectrum", "--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(inhomo(&["plan", "--eta", "0"], dir.path()).status.code(), Some(1));
    assert_eq!(inhomo(&["spectrum", "--from", "5", "--to", "5"], dir.path()).status.code(), Some(1));
    assert_eq!(inhomo(&["spectrum", "--nodes", "4"], dir.path()).status.code(), Some(1));
    assert_eq!(inhomo(&["--scheme-file", "missing.json", "plan"], dir.path()).status.code(), Some(1));
}

#[test]
fn flags_override_file_values() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "workers = 2\n[scheme.params]\ndelta_r = -250.0\nomega = 30.0\n").unwrap();
    let v = json(&inhomo(&["--config", "run.toml", "--delta-r", "-300", "--print-config", "plan"], dir.path()));
    assert_eq!(v["scheme"]["params"]["delta_r"], -300.0);
    assert_eq!(v["scheme"]["params"]["omega"], 30.0);
    assert_eq!(v["workers"], 2);
}

#[test]
fn scheme_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = inhomo::scheme::preset(inhomo::scheme::PresetKind::NType, &Default::default()).unwrap();
    std::fs::write(dir.path().join("s.json"), s.to_json()).unwrap();
    let v = json(&inhomo(&["--scheme-file", "s.json", "--omega", "20", "plan"], dir.path()));
    assert_eq!(v["omega_r"], 20.0);
    assert_eq!(v["eta"], 1.0);
    let o = inhomo(&["--scheme-file", "s.json", "--sigma", "100", "plan"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_writes_rows_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = inhomo(
        &["sweep", "--nodes", "201", "--axis", "recovery.rabi=0,29", "--quantity", "beta", "-o", "s.csv"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert!(csv.starts_with("recovery.rabi,beta,error\n"));
    let beta = column(&csv, 1);
    assert!(beta[1] > beta[0]);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("s.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["rows"], 2);
    assert_eq!(inhomo(&["sweep"], dir.path()).status.code(), Some(2));
}

#[test]
fn figure_and_selftest() {
    let dir = tempfile::tempdir().unwrap();
    let o = inhomo(&["figure", "fig3b", "--nodes", "101", "--out-dir", "out"], dir.path());
    let manifest = json(&o);
    assert_eq!(manifest["figure"], "fig3b");
    assert!(dir.path().join("out/fig3b_beta_vs_delta_r.csv").exists());
    assert!(dir.path().join("out/fig3b_manifest.json").exists());
    assert_eq!(inhomo(&["figure", "fig9"], dir.path()).status.code(), Some(1));

    let o = inhomo(&["selftest", "--criteria", "1,2"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("criterion  1 PASS") && text.contains("2 of 2 criteria passed"), "{text}");
    let o = inhomo(&["selftest", "--criteria", "11"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}
