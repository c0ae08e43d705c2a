use std::path::Path;
use std::process::{Command, Output};

fn gramlab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gramlab"))
        .args(args)
        .env("GRAMLAB_OUT_DIR", out)
        .output()
        .expect("run gramlab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn csv_column(path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn k_bound_zn32() {
    let dir = tempfile::tempdir().unwrap();
    let o = gramlab(&["k-bound", "--zn", "32", "--m", "5"], dir.path());
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("K 17\n"));
    assert!(s.contains("gate 2M<K 10 < 17 pass"));
    assert!(s.contains("gate 4M<K 20 < 17 fail"));
}

#[test]
fn k_bound_cryo_and_single_irrep() {
    let dir = tempfile::tempdir().unwrap();
    let s = stdout(&gramlab(&["k-bound", "--cryo", "2", "5", "--m", "15"], dir.path()));
    assert!(s.contains("K 32\n"));
    assert!(s.contains("gate 2M<K 30 < 32 pass"));
    let s = stdout(&gramlab(&["k-bound", "--spec", r#"{"blocks":[[7,1]]}"#], dir.path()));
    assert!(s.contains("K 1\n"));
    let o = gramlab(&["k-bound", "--spec", r#"{"blocks":[[0,1]]}"#], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn segment_csv_ratio_decreases() {
    let dir = tempfile::tempdir().unwrap();
    let o = gramlab(&["counterexample", "--which", "segment", "--grid", "0.4,0.2,0.1,0.05"], dir.path());
    assert!(o.status.success());
    let ratio = csv_column(&dir.path().join("segment.csv"), "ratio");
    assert_eq!(ratio.len(), 4);
    assert!(ratio.windows(2).all(|w| w[1] < w[0]));
    assert!(dir.path().join("counterexample.manifest.json").exists());
}

#[test]
fn plane_csv_has_constant_dh() {
    let dir = tempfile::tempdir().unwrap();
    let o = gramlab(&["counterexample", "--which", "plane", "--a", "1,10,100"], dir.path());
    assert!(o.status.success());
    assert!(csv_column(&dir.path().join("plane.csv"), "d_h").iter().all(|&d| d == 2.0));
}

#[test]
fn lipschitz_upper_bound() {
    let dir = tempfile::tempdir().unwrap();
    let o = gramlab(
        &["lipschitz", "--prior", "linear", "--spec", "zn32", "--m", "5", "--pairs", "10000", "--seed", "7"],
        dir.path(),
    );
    assert!(o.status.success());
    let c2 = csv_column(&dir.path().join("lipschitz.csv"), "c2_hat")[0];
    assert!(c2 <= std::f64::consts::SQRT_2 + 1e-6);
}

#[test]
fn stochastic_commands_need_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = gramlab(&["lipschitz", "--prior", "linear", "--spec", "zn8", "--m", "2"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = gramlab(&["metrics", "--spec", "zn8"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn transversality_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = gramlab(
        &["transversality", "--prior", "linear", "--spec", "zn32", "--m", "5", "--budget", "1000", "--seed", "1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let o = gramlab(
        &["transversality", "--prior", "sphere", "--spec", r#"{"blocks":[[2,1]]}"#, "--m", "1", "--budget", "200", "--seed", "1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let text = std::fs::read_to_string(dir.path().join("transversality.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("violation_found"));
}

#[test]
fn cryo_regime_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["cryoem", "--l", "2", "--r", "3", "--m", "2", "--trials", "0", "--seed", "1"];
    assert_eq!(gramlab(&args, dir.path()).status.code(), Some(1));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(gramlab(&forced, dir.path()).status.code(), Some(0));
}

#[test]
fn cryo_gate_failure_is_flagged_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let o = gramlab(
        &["cryoem", "--l", "2", "--r", "5", "--prior", "sparse", "--m", "8", "--trials", "0", "--restarts", "2", "--seed", "1"],
        dir.path(),
    );
    assert!(o.status.success());
    assert!(stdout(&o).contains("gate 4M<K 32 < 32 fail"));
}

#[test]
fn run_from_json_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"command": "counterexample", "which": "plane", "a": [1, 2]}"#).unwrap();
    let o = gramlab(&["run", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_column(&dir.path().join("plane.csv"), "a"), vec![1.0, 2.0]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("counterexample.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_digest"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 1);
}

#[test]
fn same_config_same_digest() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["mra", "--zn", "8", "--ns", "500", "--trials", "2", "--seed", "9"];
    assert!(gramlab(&args, a.path()).status.success());
    assert!(gramlab(&args, b.path()).status.success());
    let digest = |p: &Path| {
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(p.join("mra.manifest.json")).unwrap()).unwrap();
        v["config_digest"].as_str().unwrap().to_string()
    };
    assert_eq!(digest(a.path()), digest(b.path()));
    assert_eq!(
        std::fs::read(a.path().join("mra.csv")).unwrap(),
        std::fs::read(b.path().join("mra.csv")).unwrap()
    );
}

#[test]
fn bad_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = gramlab(&["run", "/nonexistent/config.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}
