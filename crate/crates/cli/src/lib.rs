//! Runner behind the `spinarray` binary: config ingestion, seeded runs,
//! artifact export and run manifests.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spinarray_core::device::{
    run_loading_sequence_with, stability_map, ChargeMode, LoadingOptions, LoadingOutcome, MapAxis, MapOptions, N_PAIRS,
};
use spinarray_core::experiments::{run_experiment, ExperimentKind, ExperimentOutput};
use spinarray_core::export::{csv_table, write_atomic, write_experiment};
use spinarray_core::spin::larmor_frequency;
use spinarray_core::{Backend, Config, Diagnostic, Error, ExperimentSpec, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Process exit code for an error: 1 config, 2 runtime, 3 fit non-convergence.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::Config(_) | Error::Usage(_) => 1,
        Error::NonConvergence { .. } => 3,
        _ => 2,
    }
}

/// Command-line overrides applied on top of the experiment specs.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub backend: Option<Backend>,
    pub shots: Option<u32>,
    pub threads: Option<usize>,
    pub record_shots: bool,
}

impl RunOptions {
    pub fn apply(&self, spec: &ExperimentSpec) -> ExperimentSpec {
        let mut s = spec.clone();
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(b) = self.backend {
            s.backend = b;
        }
        if let Some(n) = self.shots {
            s.shots = n;
        }
        s.record_shots |= self.record_shots;
        s
    }

    /// Runs `f` on a pool with the requested thread count.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        match self.threads {
            None => Ok(f()),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Usage(format!("cannot build thread pool: {e}")))?;
                Ok(pool.install(f))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 of the config bytes.
    pub config_hash: String,
    /// Seed override, if any; per-experiment seeds are in the sidecars.
    pub seed: Option<u64>,
    pub version: String,
    pub experiments: Vec<String>,
    pub files: Vec<String>,
    pub duration_seconds: f64,
    /// `"ok"` or the error that aborted the run.
    pub status: String,
}

pub fn config_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// A parsed config with the bytes it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: Config,
    pub hash: String,
}

impl LoadedConfig {
    pub fn from_path(path: &Path) -> Result<LoadedConfig> {
        let text = std::fs::read_to_string(path)?;
        Ok(LoadedConfig { config: Config::from_toml_str(&text)?, hash: config_hash(text.as_bytes()) })
    }

    pub fn bundled() -> Result<LoadedConfig> {
        let config = Config::bundled();
        let hash = config_hash(config.to_toml_string()?.as_bytes());
        Ok(LoadedConfig { config, hash })
    }
}

fn relative(out_dir: &Path, files: &[PathBuf]) -> Vec<String> {
    files.iter().map(|p| p.strip_prefix(out_dir).unwrap_or(p).to_string_lossy().into_owned()).collect()
}

fn finish_manifest(out_dir: &Path, mut manifest: RunManifest, started: Instant) -> Result<RunManifest> {
    manifest.duration_seconds = started.elapsed().as_secs_f64();
    manifest.files.push("manifest.json".into());
    write_atomic(&out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(manifest)
}

fn ensure_dir(out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    if std::fs::metadata(out_dir)?.permissions().readonly() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::PermissionDenied,
            format!("output directory {} is not writable", out_dir.display()),
        )));
    }
    Ok(())
}

/// Runs one named experiment and writes its CSV files, JSON sidecar and a
/// manifest into `out_dir`.
pub fn run(cfg: &LoadedConfig, name: &str, opts: &RunOptions, out_dir: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    let spec = opts.apply(cfg.config.experiment(name)?);
    ensure_dir(out_dir)?;
    let output = opts.install(|| run_experiment(&cfg.config, &spec))??;
    let files = write_experiment(out_dir, name, &spec, &output)?;
    let manifest = RunManifest {
        config_hash: cfg.hash.clone(),
        seed: opts.seed,
        version: VERSION.into(),
        experiments: vec![name.into()],
        files: relative(out_dir, &files),
        duration_seconds: 0.0,
        status: "ok".into(),
    };
    finish_manifest(out_dir, manifest, started)
}

/// One row of the per-qubit summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitSummary {
    pub qubit: usize,
    pub larmor: f64,
    pub larmor_offset: f64,
    pub rabi_configured: f64,
    pub rabi_fit: f64,
    pub rabi_sigma: f64,
    pub t2_star_fit: f64,
    pub t2_star_sigma: f64,
    pub t2_hahn_fit: f64,
    pub t2_hahn_sigma: f64,
}

pub const SUMMARY_COLUMNS: [&str; 10] = [
    "qubit",
    "larmor (Hz)",
    "larmor_offset (Hz)",
    "rabi_configured (Hz)",
    "rabi_fit (Hz)",
    "rabi_sigma (Hz)",
    "t2_star_fit (s)",
    "t2_star_sigma (s)",
    "t2_hahn_fit (s)",
    "t2_hahn_sigma (s)",
];

impl QubitSummary {
    fn row(&self) -> Vec<f64> {
        vec![
            self.qubit as f64,
            self.larmor,
            self.larmor_offset,
            self.rabi_configured,
            self.rabi_fit,
            self.rabi_sigma,
            self.t2_star_fit,
            self.t2_star_sigma,
            self.t2_hahn_fit,
            self.t2_hahn_sigma,
        ]
    }
}

/// The characterization suite derived from a config: per-qubit chevron,
/// Ramsey and Hahn runs, then the cell-level experiments when their qubits
/// exist. Named specs in the config take precedence over the defaults.
pub fn suite(cfg: &Config) -> Vec<(String, ExperimentSpec)> {
    let pick = |name: String, kind: ExperimentKind, qubit: usize, seed: u64| {
        let spec = cfg
            .experiments
            .get(&name)
            .filter(|s| s.kind == kind)
            .cloned()
            .unwrap_or_else(|| ExperimentSpec::new(kind, qubit).with_seed(seed));
        (name, spec)
    };
    let mut out = Vec::new();
    for (i, q) in cfg.device.qubits.iter().enumerate() {
        let d = q.dot_index;
        out.push(pick(format!("chevron-q{d}"), ExperimentKind::Chevron, d, 1000 + i as u64));
        out.push(pick(format!("ramsey-q{d}"), ExperimentKind::RamseyPurity, d, 1100 + i as u64));
        out.push(pick(format!("hahn-q{d}"), ExperimentKind::Hahn, d, 1200 + i as u64));
    }
    let has = |dots: &[usize]| dots.iter().all(|&d| cfg.device.qubit(d - 1).is_some());
    if has(&[1, 2]) {
        out.push(pick("fingerprint".into(), ExperimentKind::Fingerprint, 2, 7));
        out.push(pick("exchange-spectroscopy".into(), ExperimentKind::ExchangeSpectroscopy, 2, 8));
        out.push(pick("cz-calibration".into(), ExperimentKind::CzCalibration, 2, 9));
    }
    if has(&[3, 4]) && cfg.device.pairs.len() == N_PAIRS {
        out.push(pick("cascade-calibration".into(), ExperimentKind::CascadeCalibration, 3, 10));
    }
    out
}

fn fit_of(outputs: &[(String, ExperimentOutput)], name: &str, fit: &str, param: &str) -> (f64, f64) {
    outputs
        .iter()
        .find(|(n, _)| n == name)
        .and_then(|(_, o)| o.fits.get(fit))
        .map_or((f64::NAN, f64::NAN), |f| (f.value(param), f.sigma(param)))
}

pub fn qubit_summary(cfg: &Config, outputs: &[(String, ExperimentOutput)]) -> Vec<QubitSummary> {
    let larmor: Vec<f64> = cfg.device.qubits.iter().map(|q| larmor_frequency(q, &cfg.field)).collect();
    let base = larmor.iter().cloned().fold(f64::INFINITY, f64::min);
    cfg.device
        .qubits
        .iter()
        .zip(&larmor)
        .map(|(q, &f)| {
            let d = q.dot_index;
            let (rabi_fit, rabi_sigma) = fit_of(outputs, &format!("chevron-q{d}"), "chevron", "fR");
            let (t2_star_fit, t2_star_sigma) = fit_of(outputs, &format!("ramsey-q{d}"), "ramsey", "T");
            let (t2_hahn_fit, t2_hahn_sigma) = fit_of(outputs, &format!("hahn-q{d}"), "hahn", "T");
            QubitSummary {
                qubit: d,
                larmor: f,
                larmor_offset: f - base,
                rabi_configured: q.rabi_frequency * cfg.field.b1_amplitude,
                rabi_fit,
                rabi_sigma,
                t2_star_fit,
                t2_star_sigma,
                t2_hahn_fit,
                t2_hahn_sigma,
            }
        })
        .collect()
}

/// Runs the full characterization suite and writes every experiment plus
/// `summary.csv` (one row per qubit) and `summary.json`. On error the
/// manifest lists what was written before the failure.
pub fn reproduce_suite(cfg: &LoadedConfig, opts: &RunOptions, out_dir: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    ensure_dir(out_dir)?;
    let mut manifest = RunManifest {
        config_hash: cfg.hash.clone(),
        seed: opts.seed,
        version: VERSION.into(),
        experiments: Vec::new(),
        files: Vec::new(),
        duration_seconds: 0.0,
        status: "ok".into(),
    };
    let mut outputs = Vec::new();
    for (name, spec) in suite(&cfg.config) {
        let spec = opts.apply(&spec);
        let result = opts
            .install(|| run_experiment(&cfg.config, &spec))
            .and_then(|r| r)
            .and_then(|o| Ok((write_experiment(out_dir, &name, &spec, &o)?, o)));
        match result {
            Ok((files, o)) => {
                manifest.files.extend(relative(out_dir, &files));
                manifest.experiments.push(name.clone());
                outputs.push((name, o));
            }
            Err(e) => {
                manifest.status = format!("failed at {name}: {e}");
                finish_manifest(out_dir, manifest, started)?;
                return Err(e);
            }
        }
    }
    let summary = qubit_summary(&cfg.config, &outputs);
    let columns: Vec<String> = SUMMARY_COLUMNS.iter().map(|c| c.to_string()).collect();
    let rows: Vec<Vec<f64>> = summary.iter().map(QubitSummary::row).collect();
    write_atomic(&out_dir.join("summary.csv"), csv_table(&columns, &rows).as_bytes())?;
    let cells: serde_json::Map<String, serde_json::Value> = outputs
        .iter()
        .filter(|(_, o)| {
            !matches!(o.kind, ExperimentKind::Chevron | ExperimentKind::RamseyPurity | ExperimentKind::Hahn)
        })
        .map(|(n, o)| (n.clone(), serde_json::to_value(&o.summary).unwrap_or_default()))
        .collect();
    let json = serde_json::json!({ "qubits": summary, "cells": cells });
    write_atomic(&out_dir.join("summary.json"), serde_json::to_string_pretty(&json)?.as_bytes())?;
    manifest.files.push("summary.csv".into());
    manifest.files.push("summary.json".into());
    finish_manifest(out_dir, manifest, started)
}

/// Diagnostics for a config file. Parse failures are returned as errors.
pub fn validate(path: &Path) -> Result<Vec<Diagnostic>> {
    Ok(LoadedConfig::from_path(path)?.config.validate())
}

/// Charge stability map of one cell as a long-format CSV
/// (`x, y, signal, n_left, n_right`).
pub fn map_csv(cfg: &Config, pair: usize, x: &MapAxis, y: &MapAxis, mode: ChargeMode) -> Result<String> {
    let opts = MapOptions { mode, ..MapOptions::default() };
    let m = stability_map(&cfg.device, pair, x, y, &opts)?;
    let columns = vec![
        format!("{} (V)", x.gate),
        format!("{} (V)", y.gate),
        "signal (a.u.)".to_string(),
        "n_left".to_string(),
        "n_right".to_string(),
    ];
    let mut rows = Vec::with_capacity(m.values.len());
    for (iy, &vy) in m.y.iter().enumerate() {
        for (ix, &vx) in m.x.iter().enumerate() {
            let (l, r) = m.occupation(ix, iy).map_or((f64::NAN, f64::NAN), |o| (o[0] as f64, o[1] as f64));
            rows.push(vec![vx, vy, m.at(ix, iy), l, r]);
        }
    }
    Ok(csv_table(&columns, &rows))
}

/// Loads the configured control occupations with the staged routine.
pub fn load(cfg: &Config, seed: u64, jitter: f64) -> Result<LoadingOutcome> {
    if cfg.device.pairs.len() != N_PAIRS {
        return Err(Error::Config(format!("device needs {N_PAIRS} pairs")));
    }
    let targets: [u32; N_PAIRS] = std::array::from_fn(|p| cfg.device.pairs[p].control.iter().sum());
    run_loading_sequence_with(&cfg.device, &targets, &LoadingOptions { jitter, seed })
}
