//! Black-box tests of the `sharpiv` binary: determinism, exit codes, output
//! schemas, and a golden summary for a fixed-seed run.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sharpiv(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sharpiv"))
        .args(args)
        .current_dir(dir)
        .env_remove("SHARPIV_SEED")
        .output()
        .expect("binary runs")
}

fn simulate_fixture(dir: &Path, psi: &str, n: &str, seed: &str) -> PathBuf {
    let path = dir.join(format!("sim_{psi}_{n}_{seed}.csv"));
    let out = sharpiv(
        &[
            "simulate",
            "--dataset-out",
            path.to_str().unwrap(),
            "--psi",
            psi,
            "--n",
            n,
            "--seed",
            seed,
        ],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn analyze_is_deterministic_given_seed() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_fixture(dir.path(), "0.8", "600", "9");
    for prefix in ["one", "two"] {
        let out = sharpiv(
            &[
                "analyze",
                "--input",
                data.to_str().unwrap(),
                "--x-cols",
                "x1,x2",
                "--classifier",
                "stochastic",
                "--seed",
                "1",
                "--out-prefix",
                prefix,
            ],
            dir.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(dir.path().join("one_units.csv")).unwrap();
    let b = std::fs::read(dir.path().join("two_units.csv")).unwrap();
    assert_eq!(a, b, "per-unit CSV must be byte-identical across runs");
    let a = std::fs::read(dir.path().join("one_summary.json")).unwrap();
    let b = std::fs::read(dir.path().join("two_summary.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn degenerate_instrument_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("constant_z.csv");
    let mut body = String::from("y,a,z,x1\n");
    for i in 0..40 {
        body.push_str(&format!("{},{},1,{}\n", i % 2, i % 2, i as f64 / 40.0));
    }
    std::fs::write(&path, body).unwrap();
    let out = sharpiv(
        &["analyze", "--input", path.to_str().unwrap(), "--x-cols", "x1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("degenerate instrument arm"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn missing_column_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.csv");
    std::fs::write(&path, "y,a,z,x1\n0,0,0,0.1\n1,1,1,0.9\n").unwrap();
    let out = sharpiv(
        &["analyze", "--input", path.to_str().unwrap(), "--x-cols", "nope"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_recovers_designed_sharpness() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_fixture(dir.path(), "0.8", "5000", "11");
    let out = sharpiv(
        &[
            "analyze",
            "--input",
            data.to_str().unwrap(),
            "--x-cols",
            "x1,x2",
            "--seed",
            "11",
            "--out-prefix",
            "rec",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("rec_summary.json")).unwrap())
            .unwrap();
    let psi = summary["sharpness"]["psi_hat"].as_f64().unwrap();
    assert!((0.7..=0.9).contains(&psi), "psi_hat = {psi}");
    let mu = summary["strength"]["mu_hat"].as_f64().unwrap();
    assert!((mu - 0.3).abs() < 0.05, "mu_hat = {mu}");
    assert_eq!(summary["schema_version"], 1);
    // logit interval lies inside the unit interval
    let lo = summary["sharpness"]["logit_ci"][0].as_f64().unwrap();
    let hi = summary["sharpness"]["logit_ci"][1].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
}

#[test]
fn simulate_table_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = sharpiv(
        &[
            "simulate", "--psi", "0.8", "--n", "300", "--nsim", "3", "--seed", "4", "--out",
            "t.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let header = table.lines().next().unwrap();
    assert_eq!(
        header,
        "psi_target,psi_oracle,n,replications,failures,err_h0,err_hq,err_hs,len_ate,len_hq,\
         cover_ate,cover_hq,mu_mean,psi_bias,psi_sd,psi_cover,psi_cover_wald"
    );
    assert_eq!(table.lines().count(), 2);
}

#[test]
fn dgp_solve_roundtrips_target() {
    let dir = tempfile::tempdir().unwrap();
    let out = sharpiv(&["dgp-solve", "--mu", "0.3", "--psi", "0.5"], dir.path());
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let psi = json["moments"]["psi"].as_f64().unwrap();
    assert!((psi - 0.5).abs() <= 1e-3, "psi = {psi}");
    // unreachable target exits with the numerical-failure code
    let bad = sharpiv(&["dgp-solve", "--mu", "0.3", "--psi", "0.9999"], dir.path());
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn fstat_demo_orders_instruments() {
    let dir = tempfile::tempdir().unwrap();
    let out = sharpiv(
        &["fstat-demo", "--n", "500", "--nsim", "60", "--seed", "5"],
        dir.path(),
    );
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let f1 = json["mean_f_z1"].as_f64().unwrap();
    let f2i = json["mean_f_z2_inter"].as_f64().unwrap();
    assert!(f1 > f2i, "expected F(Z1) {f1} > F(Z2 interaction) {f2i}");
}

#[test]
fn margin_uniform_fits_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let out = sharpiv(
        &["margin", "--score-dist", "uniform", "--out", "m.csv"],
        dir.path(),
    );
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("C = 2, alpha = 1"), "{text}");
    let csv = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert!(csv.lines().next().unwrap() == "t,p");
    assert_eq!(csv.lines().count(), 51);
}

#[test]
fn golden_summary_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_fixture(dir.path(), "0.5", "400", "21");
    let out = sharpiv(
        &[
            "analyze",
            "--input",
            data.to_str().unwrap(),
            "--x-cols",
            "x1,x2",
            "--seed",
            "21",
            "--out-prefix",
            "golden",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let produced = std::fs::read_to_string(dir.path().join("golden_summary.json")).unwrap();
    let golden_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/summary.json");
    if std::env::var("UPDATE_GOLDEN").is_ok() {
        std::fs::write(&golden_path, &produced).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&golden_path)
        .expect("golden file present; regenerate with UPDATE_GOLDEN=1");
    assert_eq!(produced, expected, "summary JSON drifted from the golden file");
}
