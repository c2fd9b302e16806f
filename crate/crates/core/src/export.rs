//! CSV and JSON artifacts of an experiment run.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! payload is a pure function of the simulated data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::FitResult;
use crate::error::Result;
use crate::experiments::{ExperimentOutput, ExperimentSpec, ShotRecord};

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

pub fn csv_table(columns: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = columns.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Raw shots: one line per shot with sweep indices, sensor signal and label.
pub fn shots_csv(records: &[ShotRecord]) -> String {
    let mut out = String::from(
        "point,variant,shot,herald,dqd,mode,raw_signal (a.u.),label,target_up,frame_left (rad),frame_right (rad),stream\n",
    );
    for r in records {
        let point = r.point.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(":");
        let (dqd, raw, label) = match &r.outcome {
            Some(o) => {
                ((o.dqd + 1).to_string(), o.raw_signal.to_string(), if o.label.is_odd() { "odd" } else { "even" })
            }
            None => (String::new(), String::new(), ""),
        };
        let mode = match r.mode {
            crate::readout::ReadoutMode::Direct => "direct",
            crate::readout::ReadoutMode::Cascaded => "cascaded",
        };
        let _ = writeln!(
            out,
            "{point},{},{},{},{dqd},{mode},{raw},{label},{},{},{},{}",
            r.variant, r.shot, r.herald as u8, r.hit as u8, r.frame[0], r.frame[1], r.stream
        );
    }
    out
}

/// Histograms in long format.
pub fn histograms_csv(histograms: &BTreeMap<String, Vec<f64>>) -> String {
    let mut out = String::from("histogram,raw_signal (a.u.)\n");
    for (name, values) in histograms {
        for v in values {
            let _ = writeln!(out, "{},{v}", csv_field(name));
        }
    }
    out
}

#[derive(Debug, Serialize)]
pub struct Sidecar<'a> {
    pub experiment: &'a str,
    pub kind: &'a str,
    pub seed: u64,
    pub spec: &'a ExperimentSpec,
    pub columns: &'a [String],
    pub fits: &'a BTreeMap<String, FitResult>,
    pub summary: &'a BTreeMap<String, f64>,
    pub warnings: &'a [String],
    pub files: Vec<String>,
}

/// Writes `contents` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes the main grid, secondary tables, histograms, shots and the JSON
/// sidecar of one experiment into `dir`. Returns the written paths.
pub fn write_experiment(dir: &Path, name: &str, spec: &ExperimentSpec, out: &ExperimentOutput) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    files.push((dir.join(format!("{name}.csv")), csv_table(&out.columns, &out.rows)));
    for (table, t) in &out.tables {
        files.push((dir.join(format!("{name}.{table}.csv")), csv_table(&t.columns, &t.rows)));
    }
    if !out.histograms.is_empty() {
        files.push((dir.join(format!("{name}.histograms.csv")), histograms_csv(&out.histograms)));
    }
    if !out.records.is_empty() {
        files.push((dir.join(format!("{name}.shots.csv")), shots_csv(&out.records)));
    }
    let json_path = dir.join(format!("{name}.json"));
    let mut listed: Vec<String> =
        files.iter().map(|(p, _)| p.file_name().unwrap_or_default().to_string_lossy().into_owned()).collect();
    listed.push(format!("{name}.json"));
    let sidecar = Sidecar {
        experiment: name,
        kind: out.kind.name(),
        seed: out.seed,
        spec,
        columns: &out.columns,
        fits: &out.fits,
        summary: &out.summary,
        warnings: &out.warnings,
        files: listed,
    };
    let json = serde_json::to_string_pretty(&sidecar)?;
    files.push((json_path, json));
    for (path, contents) in &files {
        write_atomic(path, contents.as_bytes())?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
