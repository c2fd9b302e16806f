use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spinarray_core::spin::MU_B_OVER_H;
use spinarray_core::Config;
use tempfile::TempDir;

fn spinarray(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinarray")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, cfg: &Config) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    path
}

fn bundled(dir: &Path) -> PathBuf {
    write_config(dir, "config.toml", &Config::bundled())
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_summary(out: &Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn run_writes_listed_files() {
    let dir = TempDir::new().unwrap();
    let cfg = bundled(dir.path());
    let out = dir.path().join("out");
    let o = spinarray(&["run", arg(&cfg), "ramsey-q1", "--out", arg(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("ramsey-q1.csv").is_file());
    assert!(out.join("ramsey-q1.json").is_file());
    let m = manifest(&out);
    let files: Vec<&str> = m["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    for f in &files {
        assert!(out.join(f).is_file(), "{f} listed but missing");
    }
    for entry in std::fs::read_dir(&out).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        assert!(files.contains(&name.as_str()), "{name} written but not listed");
    }
    let header = std::fs::read_to_string(out.join("ramsey-q1.csv")).unwrap();
    assert!(header.lines().next().unwrap().contains("(s)"));
}

#[test]
fn payloads_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = bundled(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = spinarray(&["run", arg(&cfg), "chevron-q3", "--seed", "17", "--out", arg(out), "--record-shots"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let files = manifest(&a)["files"].clone();
    assert_eq!(files, manifest(&b)["files"]);
    for f in files.as_array().unwrap() {
        let f = f.as_str().unwrap();
        if f.ends_with(".csv") {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
        }
    }
    assert_eq!(manifest(&a)["config_hash"], manifest(&b)["config_hash"]);
}

#[test]
fn missing_gate_is_named() {
    let dir = TempDir::new().unwrap();
    let mut cfg = Config::bundled();
    cfg.device.operating_point.0.remove("P3");
    let path = write_config(dir.path(), "gate.toml", &cfg);
    let o = spinarray(&["run", arg(&path), "ramsey-q1", "--out", arg(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("P3"), "{}", stderr(&o));
}

#[test]
fn unknown_experiment_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = bundled(dir.path());
    let o = spinarray(&["run", arg(&cfg), "no-such-experiment", "--out", arg(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no-such-experiment"));
}

#[test]
fn default_config_validates() {
    let dir = TempDir::new().unwrap();
    let init = dir.path().join("init.toml");
    assert!(spinarray(&["init", arg(&init)]).status.success());
    let o = spinarray(&["validate", arg(&init)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "ok");
}

#[test]
fn hahn_shorter_than_ramsey_is_rejected() {
    let dir = TempDir::new().unwrap();
    let mut cfg = Config::bundled();
    cfg.device.qubits[0].t2_hahn = 0.5 * cfg.device.qubits[0].t2_star;
    let path = write_config(dir.path(), "t2.toml", &cfg);
    let o = spinarray(&["validate", arg(&path)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("t2_hahn"));
}

#[test]
fn non_positive_exchange_slope_is_rejected() {
    let dir = TempDir::new().unwrap();
    for slope in [0.0, -1.0] {
        let mut cfg = Config::bundled();
        cfg.exchange.slope = slope;
        let path = write_config(dir.path(), "slope.toml", &cfg);
        let o = spinarray(&["validate", arg(&path)]);
        assert_eq!(o.status.code(), Some(1));
        assert!(String::from_utf8_lossy(&o.stdout).contains("slope"));
    }
}

#[test]
fn empty_device_reproduces_empty_summary() {
    let dir = TempDir::new().unwrap();
    let mut cfg = Config::bundled();
    cfg.device.qubits.clear();
    cfg.experiments.clear();
    let path = write_config(dir.path(), "empty.toml", &cfg);
    let out = dir.path().join("out");
    let o = spinarray(&["reproduce", "--config", arg(&path), "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(read_summary(&out).is_empty());
    assert_eq!(manifest(&out)["experiments"].as_array().unwrap().len(), 0);
}

#[test]
fn reproduce_summary_spans_device_parameters() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = spinarray(&["reproduce", "--out", arg(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_summary(&out);
    assert_eq!(rows.len(), 8);

    let cfg = Config::bundled();
    let g: Vec<f64> = cfg.device.qubits.iter().map(|q| q.g_factor).collect();
    let dg = g.iter().cloned().fold(f64::MIN, f64::max) - g.iter().cloned().fold(f64::MAX, f64::min);
    assert!((dg - 2.17e-3).abs() < 1e-9);
    let span = rows.iter().map(|r| r[2]).fold(f64::MIN, f64::max) - rows.iter().map(|r| r[2]).fold(f64::MAX, f64::min);
    let expected = dg * MU_B_OVER_H * cfg.field.b0;
    assert!((span / expected - 1.0).abs() < 1e-9, "{span} vs {expected}");

    let rabi: Vec<f64> = rows.iter().map(|r| r[3]).collect();
    assert!(rabi.iter().all(|&f| (141e3..=204.5e3).contains(&f)));
    assert_eq!(rabi.iter().cloned().fold(f64::MAX, f64::min), 141e3);
    assert_eq!(rabi.iter().cloned().fold(f64::MIN, f64::max), 204.5e3);
    for r in &rows {
        assert!((r[4] / r[3] - 1.0).abs() < 0.03, "qubit {}: rabi fit {}", r[0], r[4]);
    }

    let m = manifest(&out);
    let files: Vec<&str> = m["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    for entry in std::fs::read_dir(&out).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        assert!(files.contains(&name.as_str()), "{name} written but not listed");
    }
    assert_eq!(m["status"], "ok");
}

#[test]
fn map_and_load_commands() {
    let dir = TempDir::new().unwrap();
    let cfg = bundled(dir.path());
    let map = dir.path().join("map.csv");
    let o =
        spinarray(&["map", arg(&cfg), "--dqd", "2", "--x", "P3:0.9:1.3:11", "--y", "P4:0.9:1.3:7", "--out", arg(&map)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&map).unwrap().lines().count(), 1 + 11 * 7);
    let o = spinarray(&["load", arg(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("final"));
    let o = spinarray(&["map", arg(&cfg), "--x", "P1:0:1", "--y", "P2:0:1:3"]);
    assert_eq!(o.status.code(), Some(1));
}
