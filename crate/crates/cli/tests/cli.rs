use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn facloc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facloc")).args(args).current_dir(dir).output().expect("spawn facloc")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_matches_golden_file() {
    let dir = TempDir::new().unwrap();
    let out = facloc(&["gen", "8", "32", "7", "--out", "i.json"], dir.path());
    assert!(out.status.success());
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/gen_8_32_7.json");
    assert_eq!(read_json(&dir.path().join("i.json")), read_json(&golden));
}

#[test]
fn gen_rejects_empty_sizes() {
    let dir = TempDir::new().unwrap();
    let out = facloc(&["gen", "0", "5", "1", "--out", "i.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_is_deterministic() {
    let dir = TempDir::new().unwrap();
    assert!(facloc(&["gen", "12", "40", "3", "--out", "i.json"], dir.path()).status.success());
    let a = facloc(&["run", "i.json", "--seed", "9"], dir.path());
    let b = facloc(&["run", "i.json", "--seed", "9"], dir.path());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn greedy_on_single_facility_opens_it() {
    let dir = TempDir::new().unwrap();
    assert!(facloc(&["gen", "1", "10", "5", "--out", "i.json"], dir.path()).status.success());
    let out = facloc(&["run", "i.json", "--algorithm", "mp", "--out", "r.json"], dir.path());
    assert!(out.status.success());
    let r = read_json(&dir.path().join("r.json"));
    assert_eq!(r["open"], serde_json::json!([0]));
    assert_eq!(r["assign"].as_array().unwrap().len(), 10);
}

#[test]
fn locate_stays_within_bound_of_optimum() {
    let dir = TempDir::new().unwrap();
    for seed in 0..5 {
        let seed = seed.to_string();
        assert!(facloc(&["gen", "10", "30", &seed, "--out", "i.json"], dir.path()).status.success());
        let out = facloc(&["run", "i.json", "--seed", &seed, "--out", "r.json"], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let r = read_json(&dir.path().join("r.json"));
        assert_eq!(r["reference"]["algorithm"], "opt");
        let ratio = r["reference"]["ratio"].as_f64().unwrap();
        assert!((1.0..=288.0).contains(&ratio), "ratio {ratio}");
        assert!(r["verdicts"].as_object().unwrap().values().all(|v| v == "ok"));
        assert!(facloc(&["verify", "i.json", "--result", "r.json"], dir.path()).status.success());
    }
}

#[test]
fn bench_writes_one_row_per_cell() {
    let dir = TempDir::new().unwrap();
    let out = facloc(&["bench", "--sizes", "8,16", "--trials", "3", "--out", "b.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(dir.path().join("b.csv")).unwrap();
    let headers: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(headers, ["n_f", "n_c", "seed", "rounds", "mdd_iterations", "cost_ratio_vs_mp", "verdict"]);
    let rows: Vec<_> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| &r[6] == "ok"));
}

#[test]
fn verify_exit_codes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    assert!(facloc(&["gen", "6", "12", "1", "--out", "i.json"], d).status.success());
    assert!(facloc(&["verify", "i.json"], d).status.success());

    assert!(facloc(&["run", "i.json", "--algorithm", "opt", "--out", "r.json"], d).status.success());
    let mut r = read_json(&d.join("r.json"));
    r["cost"] = Value::from("1/1");
    std::fs::write(d.join("bad.json"), r.to_string()).unwrap();
    assert_eq!(facloc(&["verify", "i.json", "--result", "bad.json"], d).status.code(), Some(1));

    let mut inst = read_json(&d.join("i.json"));
    inst["D"][0][0] = Value::from(1_000_000u64);
    std::fs::write(d.join("broken.json"), inst.to_string()).unwrap();
    assert_eq!(facloc(&["verify", "broken.json"], d).status.code(), Some(2));
    assert_eq!(facloc(&["verify", "missing.json"], d).status.code(), Some(2));
}
