//! Seeded experiment protocols: initialization, pulse sequence, readout and
//! fitting for every measurement of the device characterization.
//!
//! Each sweep point and shot draws from its own RNG stream, so results are
//! independent of thread count and evaluation order.

mod cascade;
mod coherence;
mod engine;
mod exchange;
mod feedback;

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::analysis::FitResult;
use crate::config::Config;
use crate::device::linspace;
use crate::error::{Error, Result};
use crate::readout::{ReadoutMode, ReadoutOutcome};
use crate::spin::Backend;

pub use engine::Sampling;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Chevron,
    RamseyPurity,
    Hahn,
    Fingerprint,
    ExchangeSpectroscopy,
    CzCalibration,
    CascadeCalibration,
    FeedbackDemo,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Chevron,
        ExperimentKind::RamseyPurity,
        ExperimentKind::Hahn,
        ExperimentKind::Fingerprint,
        ExperimentKind::ExchangeSpectroscopy,
        ExperimentKind::CzCalibration,
        ExperimentKind::CascadeCalibration,
        ExperimentKind::FeedbackDemo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Chevron => "chevron",
            ExperimentKind::RamseyPurity => "ramsey_purity",
            ExperimentKind::Hahn => "hahn",
            ExperimentKind::Fingerprint => "fingerprint",
            ExperimentKind::ExchangeSpectroscopy => "exchange_spectroscopy",
            ExperimentKind::CzCalibration => "cz_calibration",
            ExperimentKind::CascadeCalibration => "cascade_calibration",
            ExperimentKind::FeedbackDemo => "feedback_demo",
        }
    }

    fn default_shots(self) -> u32 {
        match self {
            ExperimentKind::RamseyPurity | ExperimentKind::Hahn => 200,
            ExperimentKind::CascadeCalibration => 400,
            _ => 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub name: String,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl SweepAxis {
    pub fn new(name: &str, start: f64, stop: f64, points: usize) -> Self {
        Self { name: name.to_owned(), start, stop, points }
    }

    pub fn values(&self) -> Vec<f64> {
        linspace(self.start, self.stop, self.points)
    }
}

/// Protocol constants. Only the fields relevant to the experiment kind are
/// read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolParams {
    /// Exchange period of the fingerprint map (s).
    pub wait: f64,
    /// Detuning during exchange pulses (V).
    pub eps: f64,
    /// Exchange used for the CZ gate (Hz).
    pub cz_exchange: f64,
    /// Largest residual per-repetition phase accepted by the CZ calibration (rad).
    pub cz_tolerance: f64,
    /// Virtual-Z corrections (left, right) already applied after each CZ; the
    /// calibration then reports the remaining correction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cz_precorrection: Option<[f64; 2]>,
    /// Include the slow OU drift in the stochastic backend.
    pub drift: bool,
    /// Lateral detuning used when reading a central pair (V); defaults to the
    /// cascade anticrossing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lateral_eps: Option<f64>,
    /// Feedback cycles.
    pub cycles: u32,
    /// Larmor random-walk step per cycle (Hz).
    pub larmor_step: f64,
    /// SET peak random-walk step per cycle (V).
    pub set_step: f64,
    /// Free evolution of the feedback Ramsey probe (s).
    pub probe_time: f64,
    pub gain: f64,
    /// Width of the SET Coulomb peak (V).
    pub set_width: f64,
    /// Offset of the side points of the SET peak search (V).
    pub set_probe: f64,
    /// Relative noise on each SET current sample.
    pub set_noise: f64,
    /// Cycle at which an extra Larmor jump of `inject_step` is applied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inject_cycle: Option<u32>,
    /// Size of the injected Larmor jump (Hz).
    pub inject_step: f64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            wait: 1e-6,
            eps: 0.0,
            cz_exchange: 0.5e6,
            cz_tolerance: 0.05,
            cz_precorrection: None,
            drift: true,
            lateral_eps: None,
            cycles: 200,
            larmor_step: 1e3,
            set_step: 0.1e-3,
            probe_time: 10e-6,
            gain: 1.0,
            set_width: 2e-3,
            set_probe: 0.5e-3,
            set_noise: 0.01,
            inject_cycle: None,
            inject_step: 0.0,
        }
    }
}

fn default_qubit() -> usize {
    1
}

fn default_true() -> bool {
    true
}

fn default_backend() -> Backend {
    Backend::Stochastic
}

/// One named experiment. `qubit` is the 1-based dot index of the target;
/// for two-qubit protocols the other dot of its pair is the control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    #[serde(default = "default_qubit")]
    pub qubit: usize,
    /// Sweep axes; missing axes take the protocol defaults.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub axes: Vec<SweepAxis>,
    /// Shots per point (0 selects the protocol default).
    #[serde(default)]
    pub shots: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_backend")]
    pub backend: Backend,
    #[serde(default)]
    pub sampling: Sampling,
    /// When false the qubits are noiseless.
    #[serde(default = "default_true")]
    pub noise: bool,
    /// Keep every shot in the output.
    #[serde(default)]
    pub record_shots: bool,
    #[serde(default)]
    pub params: ProtocolParams,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, qubit: usize) -> Self {
        Self {
            kind,
            qubit,
            axes: Vec::new(),
            shots: 0,
            seed: 0,
            backend: Backend::Stochastic,
            sampling: Sampling::Shots,
            noise: true,
            record_shots: false,
            params: ProtocolParams::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_axis(mut self, name: &str, start: f64, stop: f64, points: usize) -> Self {
        self.axes.retain(|a| a.name != name);
        self.axes.push(SweepAxis::new(name, start, stop, points));
        self
    }

    pub fn shots(&self) -> u32 {
        if self.shots == 0 {
            self.kind.default_shots()
        } else {
            self.shots
        }
    }

    /// Configured axis `name`, or the protocol default.
    pub fn axis(&self, cfg: &Config, name: &str) -> Result<SweepAxis> {
        if let Some(a) = self.axes.iter().find(|a| a.name == name) {
            return Ok(a.clone());
        }
        default_axes(self.kind, cfg, &self.params)
            .into_iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::Usage(format!("{} has no axis '{name}'", self.kind.name())))
    }

    pub fn invariant_violations(&self, cfg: &Config) -> Vec<String> {
        let mut out = Vec::new();
        let known: Vec<String> = default_axes(self.kind, cfg, &self.params).into_iter().map(|a| a.name).collect();
        for a in &self.axes {
            if a.points < 2 {
                out.push(format!("axis '{}' needs at least 2 points", a.name));
            }
            if !known.contains(&a.name) {
                out.push(format!("axis '{}' is not used by {}", a.name, self.kind.name()));
            }
            if !(a.start.is_finite() && a.stop.is_finite()) {
                out.push(format!("axis '{}' has non-finite bounds", a.name));
            }
        }
        if !(1..=cfg.device.n_dots).contains(&self.qubit) {
            out.push(format!("qubit {} is not a dot of the device", self.qubit));
        }
        out
    }
}

/// Protocol default sweep axes.
pub fn default_axes(kind: ExperimentKind, cfg: &Config, params: &ProtocolParams) -> Vec<SweepAxis> {
    let v0 = cfg.exchange.v0;
    let center = params.lateral_eps.unwrap_or(cfg.sensor.cascade_center);
    match kind {
        ExperimentKind::Chevron => {
            vec![SweepAxis::new("detuning", -600e3, 600e3, 25), SweepAxis::new("duration", 0.0, 10e-6, 41)]
        }
        ExperimentKind::RamseyPurity => vec![SweepAxis::new("delay", 0.0, 100e-6, 30)],
        ExperimentKind::Hahn => vec![SweepAxis::new("delay", 0.0, 3e-3, 25)],
        ExperimentKind::Fingerprint => {
            vec![SweepAxis::new("vj", v0 - 0.10, v0 + 0.02, 25), SweepAxis::new("eps", -0.04, 0.04, 21)]
        }
        ExperimentKind::ExchangeSpectroscopy => {
            vec![SweepAxis::new("vj", v0 - 0.01, v0 + 0.03, 12), SweepAxis::new("time", 0.0, 39.5e-6, 80)]
        }
        ExperimentKind::CzCalibration => {
            vec![SweepAxis::new("correction", 0.0, TAU * 31.0 / 32.0, 32), SweepAxis::new("repetitions", 0.0, 38.0, 39)]
        }
        ExperimentKind::CascadeCalibration => vec![SweepAxis::new("eps_lateral", center - 2e-3, center + 2e-3, 41)],
        ExperimentKind::FeedbackDemo => Vec::new(),
    }
}

/// One simulated shot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    /// Sweep indices of the point.
    pub point: Vec<usize>,
    /// Measurement variant at the point (tomography axis, preparation).
    pub variant: u32,
    pub shot: u32,
    /// False when the heralded initialization ran out of retries; the shot
    /// carries no outcome.
    pub herald: bool,
    pub outcome: Option<ReadoutOutcome>,
    pub mode: ReadoutMode,
    /// Target qubit found up.
    pub hit: bool,
    /// Frame phases of both qubits at readout (rad).
    pub frame: [f64; 2],
    /// Key of the shot's RNG streams.
    pub stream: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }
}

/// Tabular result of an experiment plus fits and optional shot records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub kind: ExperimentKind,
    pub seed: u64,
    /// Column headers with units in parentheses.
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub fits: BTreeMap<String, FitResult>,
    pub summary: BTreeMap<String, f64>,
    pub histograms: BTreeMap<String, Vec<f64>>,
    /// Secondary tables keyed by name.
    pub tables: BTreeMap<String, Table>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub records: Vec<ShotRecord>,
}

impl ExperimentOutput {
    fn new(kind: ExperimentKind, seed: u64, columns: &[&str]) -> Self {
        Self {
            kind,
            seed,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            fits: BTreeMap::new(),
            summary: BTreeMap::new(),
            histograms: BTreeMap::new(),
            tables: BTreeMap::new(),
            warnings: Vec::new(),
            records: Vec::new(),
        }
    }

    /// Values of the column whose header starts with `name`.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name || c.starts_with(&format!("{name} (")))?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn summary_value(&self, key: &str) -> f64 {
        self.summary.get(key).copied().unwrap_or(f64::NAN)
    }
}

/// Runs `spec` against the device and lab settings of `cfg`.
pub fn run_experiment(cfg: &Config, spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let violations = spec.invariant_violations(cfg);
    if !violations.is_empty() {
        return Err(Error::Usage(violations.join("; ")));
    }
    match spec.kind {
        ExperimentKind::Chevron => coherence::run_chevron(cfg, spec),
        ExperimentKind::RamseyPurity => coherence::run_ramsey_purity(cfg, spec),
        ExperimentKind::Hahn => coherence::run_hahn(cfg, spec),
        ExperimentKind::Fingerprint => exchange::run_fingerprint(cfg, spec),
        ExperimentKind::ExchangeSpectroscopy => exchange::run_exchange_spectroscopy(cfg, spec),
        ExperimentKind::CzCalibration => exchange::run_cz_calibration(cfg, spec),
        ExperimentKind::CascadeCalibration => cascade::run_cascade_calibration(cfg, spec),
        ExperimentKind::FeedbackDemo => feedback::run_feedback(cfg, spec),
    }
}

pub use cascade::run_cascade_calibration;
pub use coherence::{run_chevron, run_hahn, run_ramsey_purity};
pub use exchange::{run_cz_calibration, run_exchange_spectroscopy, run_fingerprint};
pub use feedback::run_feedback;
