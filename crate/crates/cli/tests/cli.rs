use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_valdesign"))
}

fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = bin().current_dir(dir).args(args).output().expect("binary runs");
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

fn sidecar(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_slice(&read(dir, &format!("{name}.json"))).unwrap()
}

fn rows(dir: &Path, name: &str) -> Vec<Vec<String>> {
    let text = String::from_utf8(read(dir, name)).unwrap();
    text.lines().skip(2).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for dir in [a.path(), b.path()] {
        run_ok(dir, &["design", "--d", "2", "--n", "12", "--q", "512", "--seed", "4", "--out", "xn.csv"]);
        run_ok(dir, &["design", "--d", "2", "--n", "10", "--q", "512", "--seed", "4", "--variant", "mn2", "--xn", "xn.csv", "--out", "z.csv"]);
        run_ok(dir, &["weights", "--design", "z.csv", "--xn", "xn.csv", "--q", "512", "--seed", "4", "--out", "w.csv"]);
        run_ok(dir, &["experiment-delta", "--n", "10", "--m", "6", "--q", "256", "--reference", "1024", "--probes", "512", "--seed", "4", "--out", "delta.csv"]);
        run_ok(dir, &["experiment-ise", "--d", "2", "--n", "12", "--m", "6", "--q", "256", "--reps", "3", "--reference", "1024", "--seed", "4", "--out", "ise.csv"]);
    }
    for name in ["xn.csv", "z.csv", "w.csv", "delta.csv", "ise.csv", "ise.csv.summary.csv"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
        if !name.ends_with("summary.csv") {
            let json = format!("{name}.json");
            assert_eq!(read(a.path(), &json), read(b.path(), &json), "{json}");
        }
    }
    let text = String::from_utf8(read(a.path(), "ise.csv")).unwrap();
    assert!(text.starts_with("# schema=1 config_hash="));
    assert_eq!(text.lines().nth(1).unwrap(), "d,replicate,method,weighted,ise_ref,ise_hat,rho");
}

#[test]
fn seed_changes_the_output() {
    let dir = TempDir::new().unwrap();
    run_ok(dir.path(), &["design", "--d", "2", "--n", "5", "--q", "256", "--seed", "1", "--out", "a.csv"]);
    run_ok(dir.path(), &["design", "--d", "2", "--n", "5", "--q", "256", "--seed", "2", "--out", "b.csv"]);
    assert_ne!(rows(dir.path(), "a.csv"), rows(dir.path(), "b.csv"));
}

#[test]
fn empty_design_has_header() {
    let dir = TempDir::new().unwrap();
    run_ok(dir.path(), &["design", "--d", "3", "--n", "0", "--q", "64", "--out", "e.csv"]);
    let text = String::from_utf8(read(dir.path(), "e.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1], "x1,x2,x3");
}

#[test]
fn prediction_points_are_pruned_with_zero_weight() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    run_ok(d, &["design", "--d", "2", "--n", "8", "--q", "256", "--out", "xn.csv"]);
    let xn = rows(d, "xn.csv");
    let mut z = String::from("x1,x2\n");
    for p in [vec!["0.1".to_string(), "0.9".to_string()], xn[2].clone(), vec!["0.7".into(), "0.3".into()]] {
        z.push_str(&p.join(","));
        z.push('\n');
    }
    std::fs::write(d.join("z.csv"), z).unwrap();
    run_ok(d, &["weights", "--design", "z.csv", "--xn", "xn.csv", "--q", "256", "--out", "w.csv"]);
    let w = rows(d, "w.csv");
    assert_eq!(w[1][3], "1");
    assert_eq!(w[1][2].parse::<f64>().unwrap(), 0.0);
    assert_eq!((w[0][3].as_str(), w[2][3].as_str()), ("0", "0"));
    let mass: f64 = w.iter().map(|r| r[2].parse::<f64>().unwrap()).sum();
    let json = sidecar(d, "w.csv");
    assert!((json["result"]["total_mass"].as_f64().unwrap() - mass).abs() <= 1e-12);
    assert_eq!(json["result"]["pruned"], 1);
}

#[test]
fn weights_round_trip_reproduces_criterion() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    run_ok(d, &["design", "--d", "2", "--n", "15", "--q", "512", "--out", "xn.csv"]);
    run_ok(d, &["design", "--d", "2", "--n", "10", "--q", "512", "--initial", "xn.csv", "--out", "z.csv"]);
    run_ok(d, &["weights", "--design", "z.csv", "--xn", "xn.csv", "--q", "512", "--out", "w.csv"]);
    run_ok(d, &["criteria", "--design", "w.csv", "z.csv", "--xn", "xn.csv", "--q", "512", "--reference", "2048", "--probes", "1024", "--out", "c.csv"]);
    let c = rows(d, "c.csv");
    assert_eq!((c[0][0].as_str(), c[0][1].as_str()), ("w", "true"));
    assert_eq!((c[1][0].as_str(), c[1][1].as_str()), ("z", "false"));
    let reloaded: f64 = c[0][3].parse().unwrap();
    let direct = sidecar(d, "w.csv")["result"]["delta_bar"].as_f64().unwrap();
    assert!((reloaded - direct).abs() <= 1e-12, "{reloaded} vs {direct}");
    let unweighted: f64 = c[1][3].parse().unwrap();
    assert!(reloaded <= unweighted);
}

#[test]
fn design_command_reproduces_experiment_prediction_design() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    run_ok(d, &["design", "--variant", "kh", "--d", "2", "--n", "12", "--theta", "auto", "--q", "512", "--seed", "9", "--out", "xn.csv"]);
    run_ok(d, &["experiment-delta", "--n", "12", "--m", "4", "--q", "512", "--reference", "256", "--probes", "256", "--seed", "9", "--out", "delta.csv", "--xn-out", "xn2.csv"]);
    assert_eq!(rows(d, "xn.csv"), rows(d, "xn2.csv"));
}

#[test]
fn conditional_kernel_pathway_matches_weighted_continuation() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let common = ["--d", "1", "--theta", "10", "--q", "256", "--seed", "3"];
    let with = |extra: &[&str]| -> Vec<String> { extra.iter().chain(&common).map(|s| s.to_string()).collect() };
    let a = with(&["design", "--n", "4", "--out", "xn.csv"]);
    let b = with(&["design", "--n", "8", "--variant", "mn2", "--initial", "xn.csv", "--out", "cont.csv"]);
    let c = with(&["design", "--n", "8", "--variant", "mn2", "--xn", "xn.csv", "--conditioning", "conditional", "--out", "cond.csv"]);
    for v in [&a, &b, &c] {
        run_ok(d, &v.iter().map(String::as_str).collect::<Vec<_>>());
    }
    let points = |name| rows(d, name).into_iter().map(|r| r[0].clone()).collect::<Vec<_>>();
    assert_eq!(points("cont.csv"), points("cond.csv"));
    assert_eq!(points("cont.csv").len(), 8);
}

#[test]
fn unknown_schema_version_is_rejected() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    run_ok(d, &["design", "--d", "2", "--n", "4", "--q", "64", "--out", "xn.csv"]);
    let text = String::from_utf8(read(d, "xn.csv")).unwrap().replacen("schema=1", "schema=9", 1);
    std::fs::write(d.join("bad.csv"), text).unwrap();
    let out = bin().current_dir(d).args(["metrics", "--design", "bad.csv", "--probes", "64"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema version 9"));
}

#[test]
fn theorem1_check_passes_and_invalid_input_fails() {
    let dir = TempDir::new().unwrap();
    let out = run_ok(dir.path(), &["theorem1-check"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().skip(2).all(|l| l.ends_with(",true")));
    let bad = bin().args(["design", "--d", "2", "--theta", "-1"]).output().unwrap();
    assert!(!bad.status.success());
    let mismatch = PathBuf::from("does-not-exist.csv");
    let missing = bin().args(["metrics", "--design"]).arg(&mismatch).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}
