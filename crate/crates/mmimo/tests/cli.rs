//! End-to-end tests of the `mmimo` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mmimo::{parse_config, Overrides};
use mmimo_core::sim::REGISTRY;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mmimo"));
    c.env_remove("MMIMO_OUT_DIR");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"
experiment = "uplink_ber"
n_a = 8
k = 2
n_u = 2
snr_db = [0, 10]
seed = 3
packet_len = 100
n_packets = 4
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("cfg.toml");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn ci_preset_writes_one_row_per_algorithm_and_snr() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cfg = configs().join("ci_downlink.toml");
    let o = run(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--packets", "10", "-q"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    let (cfg, spec) = parse_config(&fs::read_to_string(&cfg).unwrap(), "ci", &Overrides::default()).unwrap();
    assert_eq!(csv.lines().count(), 1 + spec.algorithms.len() * spec.scenario.snr_grid_db.len());
    assert_eq!(csv.lines().next().unwrap(), "algorithm,snr_db,metric,value,trials,stderr");
    assert!(out.join("results.json").exists());
    for name in cfg.algorithms.as_ref().unwrap() {
        let dat = fs::read_to_string(out.join("plotdata").join(format!("{name}.dat"))).unwrap();
        assert_eq!(dat.lines().filter(|l| !l.starts_with('#')).count(), spec.scenario.snr_grid_db.len());
    }
}

#[test]
fn malformed_config_exits_1_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cfg = write_config(tmp.path(), "experiment = \"uplink_ber\"\nn_a = [oops\n");
    let o = run(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.lines().last().unwrap().starts_with("error[config]: "), "{err}");
    assert!(err.contains("cfg.toml:2:"), "{err}");
    assert!(!out.exists());
}

#[test]
fn constraint_violation_names_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("n_a = 8", "n_a = 4"));
    let o = run(&["run", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("N_A > K N_U"));
}

#[test]
fn unknown_key_rejected_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SMALL}n_antennas = 3\n"));
    let o = run(&["run", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("n_antennas"));
}

#[test]
fn search_space_too_large_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let doc = SMALL.replace("n_a = 8", "n_a = 40").replace("k = 2", "k = 6") + "algorithms = [\"ml\"]\n";
    let cfg = write_config(tmp.path(), &doc);
    let o = run(&["run", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("exceeds cap"), "{}", stderr(&o));
}

#[test]
fn metadata_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let a = tmp.path().join("a");
    let o = run(&["run", cfg.to_str().unwrap(), "--seed", "9", "--snr", "-3,4.5", "--out", a.to_str().unwrap(), "-q"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let meta_text = fs::read_to_string(a.join("metadata.json")).unwrap();
    let meta: serde_json::Value = serde_json::from_str(&meta_text).unwrap();
    assert_eq!(meta["seed"], 9);
    assert_eq!(meta["schema_version"], 1);
    assert_eq!(meta["csv_header"], "algorithm,snr_db,metric,value,trials,stderr");
    assert_eq!(meta["noise_checks"].as_array().unwrap().len(), 2);

    // the echoed config parses back to the same spec
    let (_, from_meta) = parse_config(&meta_text, "meta", &Overrides::default()).unwrap();
    let o2 = Overrides { seed: Some(9), snr_db: Some(vec![-3.0, 4.5]), ..Default::default() };
    let (_, direct) = parse_config(SMALL, "small", &o2).unwrap();
    assert_eq!(from_meta, direct);

    let b = tmp.path().join("b");
    let o = run(&["run", a.join("metadata.json").to_str().unwrap(), "--out", b.to_str().unwrap(), "-q"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(a.join("results.csv")).unwrap(), fs::read(b.join("results.csv")).unwrap());
}

#[test]
fn worker_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let mut files = Vec::new();
    for w in ["1", "8"] {
        let d = tmp.path().join(w);
        let o = run(&["run", cfg.to_str().unwrap(), "--workers", w, "--out", d.to_str().unwrap(), "-q"]);
        assert!(o.status.success());
        files.push(fs::read(d.join("results.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn out_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let env_out = tmp.path().join("from_env");
    let o = bin().args(["run", cfg.to_str().unwrap(), "-q"]).env("MMIMO_OUT_DIR", &env_out).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(env_out.join("results.csv").exists());
}

#[test]
fn list_algorithms() {
    let o = run(&["list-algorithms"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("thp"));
    assert!(text.lines().any(|l| l.contains("sic_ordering")));
    let entries = text.lines().filter(|l| l.starts_with("  ") && !l.trim_start().starts_with("option")).count();
    assert_eq!(entries, REGISTRY.len());
}

#[test]
fn version_and_usage_errors() {
    let o = run(&["version"]);
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("mmimo "));
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[usage]: "));
    let o = run(&["run", "/nonexistent/x.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[config]: "));
}
