//! End-to-end checks of the `betis` binary.

use std::path::Path;
use std::process::{Command, Output};

fn betis(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_betis"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

const SMALL: &str = r#"
name = "small"
n = 300
c0 = 0.6
horizon = 30
d_inf = 0.04
n_test = 3
seeds = [3]
"#;

#[test]
fn simulate_then_filter_matches_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("small.toml"), SMALL).unwrap();

    let out = betis(&["simulate", "--config", "small.toml", "--out", "sim"], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["meta.json", "observations.ndjson", "user_contacts.csv", "truth.csv", "nonuser_pmf.csv"] {
        assert!(dir.join("sim/seed_3").join(file).exists(), "missing {file}");
    }

    let out = betis(&["filter", "--config", "small.toml", "--input", "sim/seed_3", "--out", "replay"], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["seed"], 3);

    let out = betis(&["run", "--config", "small.toml", "--out", "run", "--threads", "1"], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = std::fs::read(dir.join("replay/seed_3/metrics.csv")).unwrap();
    let b = std::fs::read(dir.join("run/seed_3/metrics.csv")).unwrap();
    assert_eq!(a, b);
    assert!(dir.join("run/summary.json").exists());
}

#[test]
fn metrics_header_lists_the_columns() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("small.toml"), SMALL).unwrap();
    let out = betis(&["run", "--config", "small.toml", "--out", "o", "--dump-beliefs"], tmp.path());
    assert!(out.status.success());
    let metrics = std::fs::read_to_string(tmp.path().join("o/seed_3/metrics.csv")).unwrap();
    assert_eq!(
        metrics.lines().next().unwrap(),
        "k,true_I,est_I,true_Ia,est_Ia,tp_I,fp_I,tp_Ia,fp_Ia,n_tested,positives,true_I_users,true_Ia_users,random_positives"
    );
    let beliefs = std::fs::read_to_string(tmp.path().join("o/seed_3/beliefs.csv")).unwrap();
    assert_eq!(beliefs.lines().next().unwrap(), "k,i,P_S,P_Sfa,P_E,P_I,P_Ia,P_R");
    assert_eq!(beliefs.lines().count(), 1 + 180 * (metrics.lines().count() - 1));
}

#[test]
fn unknown_suite_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = betis(&["suite", "fig9", "--out", "x"], tmp.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fig9"));
}

#[test]
fn bad_configs_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, text) in [("typo.toml", "betta = 0.5\n"), ("range.toml", "p_fa = 1.5\n"), ("prior.toml", "prior_s = 0.5\n")] {
        std::fs::write(tmp.path().join(name), text).unwrap();
        let out = betis(&["run", "--config", name, "--out", "x"], tmp.path());
        assert!(!out.status.success(), "{name} was accepted");
    }
}
