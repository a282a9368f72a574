//! End-to-end runs of the `csdp` binary.

use std::path::Path;
use std::process::{Command, Output};

fn csdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csdp")).args(args).output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn sum_sweep_writes_one_csv_per_family_and_fits() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "sum.toml",
        r#"
experiment = "sum-sweep"
n = [128, 256, 512, 1024]
k = [1, "binary"]
epsilon = [1.0]
trials = 4
output = "out/sum.csv"
"#,
    );
    let dump = dir.path().join("t.jsonl");
    let out = ok(&csdp(&["--seed", "9", "--dump-transcript", dump.to_str().unwrap(), "sum-sweep", "--config", &config, "--fit"]));
    for family in ["all-ones", "uniform", "hard"] {
        let csv = std::fs::read_to_string(dir.path().join(format!("out/sum.{family}.csv"))).unwrap();
        assert!(csv.starts_with("n,k,eps,mechanism,trial,max_error,alpha_hat\n"));
        assert_eq!(csv.lines().count(), 1 + 4 * 2 * 4);
    }
    assert!(out.contains("slope"), "{out}");
    assert!(std::fs::read_to_string(dump).unwrap().lines().count() > 0);
}

#[test]
fn bandit_sweep_writes_regret_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "bandit.toml",
        r#"
experiment = "bandit-sweep"
n = [200]
k = [1, 2]
epsilon = [1.0]
mechanism = ["zero-noise"]
seeds = [1, 2]
output = "regret.csv"
"#,
    );
    ok(&csdp(&["bandit-sweep", "--config", &config]));
    let csv = std::fs::read_to_string(dir.path().join("regret.csv")).unwrap();
    assert!(csv.starts_with("n,k,eps,mechanism,seed,sigma_prime,lambda,final_regret\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn mechanism_test_reports_a_passing_row() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("batch.jsonl");
    let args = ["--dump-transcript", dump.to_str().unwrap(), "mechanism-test", "--kind", "binary-blanket", "--m", "500"];
    let out = ok(&csdp(&[&args[..], &["--eps", "2", "--delta", "0.05", "--trials", "2000"]].concat()));
    let row = out.lines().nth(1).unwrap();
    assert!(row.starts_with("binary-blanket,500,"), "{row}");
    assert!(row.ends_with(",true,true"), "{row}");
    assert_eq!(std::fs::read_to_string(dump).unwrap().lines().count(), 1);
}

#[test]
fn hard_input_is_reproducible_from_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, name: &str| {
        let path = dir.path().join(name);
        ok(&csdp(&["hard-input", "--n", "500", "--k", "1", "--eps", "1", "--seed", seed, "--out", path.to_str().unwrap()]));
        std::fs::read(path).unwrap()
    };
    let (a, b, c) = (run("3", "a.json"), run("3", "b.json"), run("4", "c.json"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    let json: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(json["stream"].as_array().unwrap().len(), 500);
}

#[test]
fn bad_input_fails_cleanly() {
    let out = csdp(&["mechanism-test", "--kind", "oracle", "--m", "10", "--eps=-1", "--delta", "0.1", "--trials", "10"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = csdp(&["sum-sweep", "--config", "/nonexistent.toml"]);
    assert_eq!(out.status.code(), Some(1));
}
