use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use netsurv::io::read_edges;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_netsurv"));
    c.env_remove("NETSURV_THREADS");
    c
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn netsurv")
}

fn example_test(out: &Path, extra: &[&str]) -> Output {
    let data = data_dir().join("example.csv");
    let edges = data_dir().join("example_edges.txt");
    let mut args = vec![
        "test",
        "--data",
        data.to_str().unwrap(),
        "--edges",
        edges.to_str().unwrap(),
        "--delta0",
        "0.7",
        "--tau0",
        "2.8",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn example_pvalue_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res.json");
    let o = example_test(&out, &["--method", "ipz", "--stat", "logr", "--draws", "999", "--seed", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out);
    assert_eq!(v["draws_used"], 999);
    let pv = v["pvalue"].as_f64().unwrap();
    assert_eq!(pv, GOLDEN_PVALUE, "p-value drifted");
    let manifest = json(&dir.path().join("res.manifest.json"));
    assert_eq!(manifest["master_seed"], 1);
    assert_eq!(manifest["config_digest"].as_str().unwrap().len(), 64);
}

const GOLDEN_PVALUE: f64 = 0.109;

#[test]
fn result_bytes_do_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("r{threads}.json"));
        let o = example_test(&out, &["--stat", "lraft", "--draws", "200", "--threads", threads]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        bytes.push(fs::read(&out).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    assert_eq!(example_test(&out, &["--draws", "0"]).status.code(), Some(1));
    assert_eq!(example_test(&out, &["--exact"]).status.code(), Some(1));
    assert_eq!(example_test(&out, &["--stat", "nope"]).status.code(), Some(1));
    assert_eq!(run(&["test", "--bogus"]).status.code(), Some(1));
    let o = run(&[
        "test",
        "--data",
        "/nonexistent.csv",
        "--edges",
        "/nonexistent",
        "--delta0",
        "0",
        "--tau0",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    // KS needs uncensored data
    assert_eq!(example_test(&out, &["--stat", "ks"]).status.code(), Some(2));
    assert!(run(&["--help"]).status.success());
}

#[test]
fn exact_fixed_test_counts_every_assignment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exact.json");
    let o = example_test(&out, &["--method", "fixed", "--exact"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out);
    // C(20, 10) - 1 assignments besides the observed one
    assert_eq!(v["draws_used"], 184_755);
    assert_eq!(v["exact"], true);
}

#[test]
fn gen_network_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pa.txt");
    let o = run(&[
        "gen-network",
        "--kind",
        "pa",
        "--n",
        "60",
        "--m-edges",
        "3",
        "--seed",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = read_edges(&out, None).unwrap();
    assert_eq!(a.n(), 60);
    assert!(a.is_symmetric());
    let summary = json(&dir.path().join("pa.summary.json"));
    assert_eq!(summary["n"], 60);

    let p = dir.path().join("po.txt");
    let o = run(&[
        "gen-network",
        "--kind",
        "poisson",
        "--n",
        "50",
        "--mean",
        "4",
        "--symmetrize",
        "--out",
        p.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(read_edges(&p, Some(50)).unwrap().is_symmetric());
    assert!(read_edges(&p, Some(51)).is_err());
}

fn invert(dir: &Path, delta: &str, tau: &str) -> Output {
    let data = data_dir().join("example.csv");
    let edges = data_dir().join("example_edges.txt");
    run(&[
        "invert",
        "--data",
        data.to_str().unwrap(),
        "--edges",
        edges.to_str().unwrap(),
        "--delta-grid",
        delta,
        "--tau-grid",
        tau,
        "--draws",
        "99",
        "--out",
        dir.to_str().unwrap(),
    ])
}

#[test]
fn invert_single_point_and_empty_set() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one");
    let o = invert(&one, "0.7", "2.8");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let grid = fs::read_to_string(one.join("grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 2);
    assert!(one.join("manifest.json").exists());

    let far = dir.path().join("far");
    let o = invert(&far, "-6,-5", "-9");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&far.join("summary.json"));
    assert_eq!(s["poor_fit"], true);
    assert_eq!(fs::read_to_string(far.join("grid.csv")).unwrap().lines().count(), 3);
}

#[test]
fn simulate_smoke_and_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"kind": "type1", "replicates": 20, "draws": 200, "master_seed": 3}"#).unwrap();
    let out = dir.path().join("out");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // 20 replicates x 2 methods x 2 statistics
    assert_eq!(fs::read_to_string(out.join("pvalues.csv")).unwrap().lines().count(), 81);
    for f in ["ecdf.csv", "failures.csv", "rejection.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }

    fs::write(&cfg, r#"{"kind": "type1", "replicatez": 20, "dras": 1}"#).unwrap();
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("replicatez") && err.contains("dras"), "{err}");
}
