use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn trimode(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trimode")).args(args).arg("--out").arg(out).env("TRIMODE_THREADS", "2").output().expect("binary runs")
}

fn manifest(out: &Path, command: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join(format!("{command}.manifest.json"))).unwrap()).unwrap()
}

#[test]
fn bad_arguments_exit_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let o = trimode(dir.path(), &["spectrum", "--grid", "1x9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--grid"));

    let o = trimode(dir.path(), &["husimi", "--n-atoms", "4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--state"));

    let o = trimode(dir.path(), &["otoc-ed", "--n-atoms", "4", "--state", "0.2,0,0,0", "--v", "bogus"]);
    assert_eq!(o.status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_trimode")).args(["spectrum", "--n-atoms", "4"]).env("TRIMODE_THREADS", "zero").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn spectrum_writes_hashed_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = trimode(dir.path(), &["spectrum", "--n-atoms", "4", "--r", "0.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(dir.path(), "spectrum");
    let hash = m["config_hash"].as_str().unwrap();
    let csv = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    let header: Vec<&str> = csv.lines().take_while(|l| l.starts_with('#')).collect();
    assert!(header.iter().any(|l| l.contains(hash)));
    let rows = csv.lines().filter(|l| !l.starts_with('#')).count();
    // Header row plus (N+1)(N+2)/2 = 15 levels.
    assert_eq!(rows, 16);
    assert_eq!(m["results"]["dimension"], 15);
    assert_eq!(m["parameters"]["common"]["r"], 0.5);
}

#[test]
fn reruns_are_byte_identical_and_hash_ignores_output_dir() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["otoc-twa", "--n-atoms", "10", "--r", "0.15", "--state", "0.2,-2pi/3,0,auto", "--samples", "50", "--t-max", "1", "--steps", "10", "--seed", "7"];
    for d in [&a, &b] {
        let o = trimode(d.path(), &args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("otoc_twa.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(manifest(a.path(), "otoc-twa")["config_hash"], manifest(b.path(), "otoc-twa")["config_hash"]);
    let r = &manifest(a.path(), "otoc-twa")["results"];
    assert_eq!(r["seed"], 7);
    assert_eq!(r["n_samples"], 50);
}

#[test]
fn json_format_carries_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    let o = trimode(dir.path(), &["otoc-ed", "--n-atoms", "6", "--state", "0.2,-2pi/3,0,auto", "--t-max", "1", "--steps", "5", "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("otoc_ed.json")).unwrap()).unwrap();
    assert_eq!(doc["config_sha256"], manifest(dir.path(), "otoc-ed")["config_hash"]);
    assert_eq!(doc["data"]["times"].as_array().unwrap().len(), 6);
    assert!(doc["data"]["values"][0].as_f64().unwrap().abs() < 1e-20);
}

#[test]
fn raster_commands_can_emit_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let o = trimode(dir.path(), &["husimi", "--n-atoms", "8", "--state", "0.5,0,0,0", "--grid", "6x8", "--pgm"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pgm = fs::read_to_string(dir.path().join("husimi.pgm")).unwrap();
    let mut lines = pgm.lines();
    assert_eq!(lines.next(), Some("P2"));
    assert_eq!(lines.next(), Some("8 6"));
    assert_eq!(lines.count(), 7);
}

#[test]
fn protocol_defaults_to_the_polar_state() {
    let dir = tempfile::tempdir().unwrap();
    let o = trimode(dir.path(), &["protocol-qr", "--n-atoms", "6", "--r", "0.5", "--t-max", "0.5", "--steps", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("protocol_qr.csv")).unwrap();
    assert!(csv.contains("# state: |0,6,0>"));
    assert!(csv.lines().any(|l| l == "t,C,gamma_v,gamma_v2"));
    assert_eq!(manifest(dir.path(), "protocol-qr")["results"]["lambda"], 6.0);
}
