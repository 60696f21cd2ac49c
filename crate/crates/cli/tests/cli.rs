use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn memshield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memshield")).args(args).env("MEMSHIELD_THREADS", "2").output().expect("binary runs")
}

fn json_of(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("valid JSON")
}

fn without_timestamp(mut v: Value) -> Value {
    v["manifest"].as_object_mut().unwrap().remove("timestamp");
    v
}

#[test]
fn help_exits_zero() {
    let o = memshield(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("Usage: memshield"));
}

#[test]
fn unknown_flag_prints_usage_and_exits_one() {
    let o = memshield(&["codes", "probe", "--codec", "crc8atm", "--errors", "2", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage:"));
}

#[test]
fn simulate_requires_seed() {
    let o = memshield(&["citadel", "simulate", "--trials", "10"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--seed"));
}

#[test]
fn burst_probe_matches_known_fraction() {
    let v = json_of(&memshield(&["codes", "probe", "--codec", "hamming7264", "--errors", "4", "--mode", "burst"]));
    let f = v["result"]["detected_fraction"].as_f64().unwrap();
    assert!((f - 0.5073).abs() < 0.01, "{f}");
    assert_eq!(v["manifest"]["seed"], 1);
}

#[test]
fn malformed_fit_file_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "name = \"x\"\nunit = \"device\"\n[transient]\nbit = 1.0\nsplat = 2.0\n").unwrap();
    let o = memshield(&["xed", "simulate", "--scheme", "xed", "--seed", "1", "--trials", "10", "--fit-file", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 5"), "{err}");

    std::fs::write(&p, "name = \"x\"\nunit = \n").unwrap();
    let o = memshield(&["xed", "simulate", "--scheme", "xed", "--seed", "1", "--trials", "10", "--fit-file", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn bad_values_are_config_errors() {
    assert_eq!(memshield(&["citadel", "simulate", "--org", "nope", "--seed", "1"]).status.code(), Some(1));
    assert_eq!(memshield(&["sudoku", "inject", "--variant", "z", "--lines", "64", "--group-size", "16", "--epochs", "1", "--seed", "1"]).status.code(), Some(1));
    assert_eq!(memshield(&["archshield", "provision", "--ber", "2", "--capacity", "1GiB"]).status.code(), Some(1));
}

#[test]
fn same_seed_same_bytes() {
    let args = ["xed", "simulate", "--scheme", "chipkill", "--trials", "2000", "--seed", "11"];
    let a = without_timestamp(json_of(&memshield(&args)));
    let b = without_timestamp(json_of(&Command::new(env!("CARGO_BIN_EXE_memshield")).args(args).env("MEMSHIELD_THREADS", "1").output().unwrap()));
    assert_eq!(a, b);
    assert!(a["result"]["p_fail"].is_number());
    assert!(a["result"]["ci95"].is_number());
}

#[test]
fn citadel_simulate_emits_campaign() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.json");
    let o = memshield(&[
        "citadel", "simulate", "--org", "hmc", "--scheme", "stripe", "--tsv-fit", "143", "--trials", "500", "--seed", "3", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["result"]["trials"], 500);
    assert_eq!(v["manifest"]["config"]["org"], "hmc");
    assert_eq!(v["manifest"]["outputs"][0], out.to_str().unwrap());
}

fn csv_rows(p: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(p).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn tsv_sweep_has_fifteen_rows_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = memshield(&["citadel", "tsv-sweep", "--trials", "200", "--seed", "5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 15);
    let side: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("sweep.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(side["seed"], 5);
}

#[test]
fn overflow_curve_expands_range() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.csv");
    let o = memshield(&[
        "archshield", "overflow-curve", "--errors", "6e6:8e6:0.5e6", "--overflow-sets", "8,12,16", "--trials", "200", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 15);
    assert_eq!(&rows[0][0], "6.00000e6");
}

#[test]
fn sudoku_fit_and_inject() {
    let o = memshield(&["sudoku", "fit", "--scheme", "ecc5,x,z", "--scrub-ms", "10,20"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().any(|l| l.starts_with("x,2.00000e1")));

    let v = json_of(&memshield(&["sudoku", "inject", "--variant", "y", "--lines", "1024", "--group-size", "32", "--ber", "2e-4", "--epochs", "50", "--seed", "2"]));
    assert_eq!(v["result"]["epochs"], 50);
    assert!(v["result"]["flips"].as_u64().unwrap() > 0);
}

#[test]
fn report_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = memshield(&["report", "--out-dir", dir.path().to_str().unwrap(), "--probe-trials", "2000"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["codes_probe.csv", "codes_probe.csv.manifest.json", "sudoku_fit.csv", "archshield_provision.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert_eq!(csv_rows(&dir.path().join("sudoku_fit.csv")).len(), 40);
}
