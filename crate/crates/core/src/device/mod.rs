//! Electrostatic model of the eight-dot linear array.
//!
//! Dots are indexed 0..8 internally (P1 is dot 0) and grouped into four
//! double-dot cells `(0,1) (2,3) (4,5) (6,7)`. Energies are in meV, voltages
//! in V, lever arms are dimensionless (eV/V).
//!
//! The default parameters are fictional but plausible: they are chosen so
//! that the operating point reproduces the control occupations
//! (9-3) (3-3) (3-7) (3-1) and the readout detunings reach
//! (10-2) (4-2) (4-6) (4-0).

mod electrostatics;
mod loading;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::QubitParams;

pub(crate) use electrostatics::linspace;
pub use electrostatics::{
    apply_detuning, chemical_potentials, ground_state_occupation, pair_energy, pair_ground_state, stability_map,
    ChargeMode, MapAxis, MapOptions, StabilityMap,
};
pub use loading::{
    loaded_count, loading_voltage, run_loading_sequence, run_loading_sequence_with, LoadingOptions, LoadingOutcome,
    LoadingStage, StageLabel,
};

pub const N_DOTS: usize = 8;
pub const N_PAIRS: usize = 4;

/// Dot indices (0-based) of the four double-dot cells.
pub const PAIRS: [(usize, usize); N_PAIRS] = [(0, 1), (2, 3), (4, 5), (6, 7)];

pub fn is_central_pair(pair: usize) -> bool {
    pair == 1 || pair == 2
}

/// Voltage per gate identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct GateVoltages(pub BTreeMap<String, f64>);

impl GateVoltages {
    pub fn get(&self, gate: &str) -> Option<f64> {
        self.0.get(gate).copied()
    }

    pub fn set(&mut self, gate: &str, volts: f64) {
        self.0.insert(gate.to_owned(), volts);
    }

    /// Returns the voltage of `gate`, or a config error naming it.
    pub fn require(&self, gate: &str) -> Result<f64> {
        self.get(gate).ok_or_else(|| Error::Config(format!("missing gate {gate}")))
    }

    /// Checks that every gate of `cfg` is present and finite.
    pub fn check_complete(&self, cfg: &DeviceConfig) -> Result<()> {
        for gate in cfg.gates() {
            let v = self.require(gate)?;
            if !v.is_finite() {
                return Err(Error::Config(format!("gate {gate} has non-finite voltage")));
            }
        }
        Ok(())
    }
}

/// Integer electron occupation per dot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChargeConfiguration {
    pub occupation: Vec<u32>,
}

impl ChargeConfiguration {
    pub fn new(occupation: Vec<u32>) -> Self {
        Self { occupation }
    }

    pub fn empty() -> Self {
        Self::new(vec![0; N_DOTS])
    }

    pub fn pair(&self, pair: usize) -> (u32, u32) {
        let (l, r) = PAIRS[pair];
        (self.occupation[l], self.occupation[r])
    }

    pub fn pair_total(&self, pair: usize) -> u32 {
        let (l, r) = self.pair(pair);
        l + r
    }

    pub fn totals(&self) -> [u32; N_PAIRS] {
        std::array::from_fn(|p| self.pair_total(p))
    }

    pub fn is_odd(&self, dot: usize) -> bool {
        self.occupation[dot] % 2 == 1
    }

    pub fn is_odd_odd(&self, pair: usize) -> bool {
        let (l, r) = PAIRS[pair];
        self.is_odd(l) && self.is_odd(r)
    }

    pub fn is_even_even(&self, pair: usize) -> bool {
        let (l, r) = PAIRS[pair];
        !self.is_odd(l) && !self.is_odd(r)
    }
}

impl std::fmt::Display for ChargeConfiguration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = (0..self.occupation.len() / 2)
            .map(|p| format!("({}-{})", self.occupation[2 * p], self.occupation[2 * p + 1]))
            .collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// Antisymmetric plunger detuning of one double dot around an origin.
#[derive(Debug, Clone, PartialEq)]
pub struct DetuningAxis {
    pub pair: usize,
    pub origin: GateVoltages,
}

/// Per-cell charge bookkeeping: control and readout occupations and the
/// detuning (V) that moves the cell from one to the other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairConfig {
    pub control: [u32; 2],
    pub readout: [u32; 2],
    pub readout_detuning: f64,
}

/// Rectangular region of a 2D sweep that the model does not support
/// (dots forming under a barrier, charge instabilities). Points inside are
/// reported as invalid rather than computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionWindow {
    pub x_axis: String,
    pub x_range: [f64; 2],
    pub y_axis: String,
    pub y_range: [f64; 2],
}

impl ExclusionWindow {
    pub fn contains(&self, x_axis: &str, x: f64, y_axis: &str, y: f64) -> bool {
        let inside = |r: [f64; 2], v: f64| v >= r[0].min(r[1]) && v <= r[0].max(r[1]);
        (self.x_axis == x_axis && self.y_axis == y_axis && inside(self.x_range, x) && inside(self.y_range, y))
            || (self.x_axis == y_axis && self.y_axis == x_axis && inside(self.x_range, y) && inside(self.y_range, x))
    }
}

/// Monotone loading calibration of one double dot: `thresholds[k]` is the
/// loading-gate voltage above which `k + 1` electrons are captured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadingTable {
    pub gate: String,
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadingConfig {
    pub tables: Vec<LoadingTable>,
    /// Plunger/barrier voltage used to flood the array with the 2DEG.
    pub flood_voltage: f64,
    /// Voltage applied to gates used as blocking potentials.
    pub block_voltage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviceConfig {
    pub n_dots: usize,
    pub plunger_gates: Vec<String>,
    pub barrier_gates: Vec<String>,
    pub sensor_gates: Vec<String>,
    /// `n_dots` rows, one column per gate in [`DeviceConfig::gates`] order.
    pub lever_arms: Vec<Vec<f64>>,
    /// Per-dot charging energy (meV).
    pub charging_energy: Vec<f64>,
    /// Per-cell mutual charging energy at the operating barrier voltage (meV).
    pub mutual_charging: Vec<f64>,
    /// Change of mutual charging with the cell's barrier voltage (meV/V).
    pub mutual_barrier_coupling: Vec<f64>,
    /// Per-dot electrochemical offset subtracted from the gate term (meV).
    pub dot_offset: Vec<f64>,
    /// Largest per-dot occupation considered in open mode.
    pub max_electrons: u32,
    pub operating_point: GateVoltages,
    pub pairs: Vec<PairConfig>,
    pub loading: LoadingConfig,
    pub exclusions: Vec<ExclusionWindow>,
    pub qubits: Vec<QubitParams>,
}

impl DeviceConfig {
    /// All gate identifiers: plungers, then barriers, then sensors.
    pub fn gates(&self) -> impl Iterator<Item = &str> {
        self.plunger_gates.iter().chain(&self.barrier_gates).chain(&self.sensor_gates).map(String::as_str)
    }

    pub fn gate_index(&self, gate: &str) -> Option<usize> {
        self.gates().position(|g| g == gate)
    }

    /// Intra-cell barrier gate of a pair (J1, J3, J5, J7).
    pub fn pair_barrier(&self, pair: usize) -> &str {
        &self.barrier_gates[2 * pair]
    }

    pub fn pair_plungers(&self, pair: usize) -> (&str, &str) {
        let (l, r) = PAIRS[pair];
        (&self.plunger_gates[l], &self.plunger_gates[r])
    }

    /// Qubit parameters of a dot (0-based), if that dot hosts a qubit.
    pub fn qubit(&self, dot: usize) -> Option<&QubitParams> {
        self.qubits.iter().find(|q| q.dot_index == dot + 1)
    }

    /// Mutual charging energy of a cell at the given voltages (meV).
    pub fn mutual_charging_at(&self, pair: usize, v: &GateVoltages) -> f64 {
        let barrier = self.pair_barrier(pair);
        let reference = self.operating_point.get(barrier).unwrap_or(0.0);
        let vb = v.get(barrier).unwrap_or(reference);
        let em = self.mutual_charging[pair] + self.mutual_barrier_coupling[pair] * (vb - reference);
        let (l, r) = PAIRS[pair];
        let cap = 0.95 * self.charging_energy[l].min(self.charging_energy[r]);
        em.max(0.0).min(cap)
    }

    /// Structural invariants; violations are returned as messages.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_dots != N_DOTS {
            out.push(format!("n_dots must be {N_DOTS}, got {}", self.n_dots));
        }
        if self.plunger_gates.len() != self.n_dots {
            out.push("one plunger gate per dot required".into());
        }
        if self.barrier_gates.len() != self.n_dots.saturating_sub(1) {
            out.push("n_dots - 1 barrier gates required".into());
        }
        if self.sensor_gates.len() != 2 {
            out.push("two sensor gates required".into());
        }
        let n_gates = self.gates().count();
        if self.lever_arms.len() != self.n_dots {
            out.push("lever_arms must have one row per dot".into());
        }
        for (i, row) in self.lever_arms.iter().enumerate() {
            if row.len() != n_gates {
                out.push(format!("lever_arms row {i} has {} entries, expected {n_gates}", row.len()));
                continue;
            }
            if row.iter().any(|a| !(0.0..=1.0).contains(a)) {
                out.push(format!("lever_arms row {i} has entries outside [0,1]"));
            }
            if i < row.len() {
                let own = row[i];
                if row.iter().enumerate().any(|(j, &a)| j != i && a >= own) {
                    out.push(format!(
                        "lever arm of {} on dot {} is not strictly largest",
                        self.plunger_gates.get(i).map_or("?", |s| s),
                        i + 1
                    ));
                }
            }
        }
        for (name, len) in [("charging_energy", self.charging_energy.len()), ("dot_offset", self.dot_offset.len())] {
            if len != self.n_dots {
                out.push(format!("{name} needs {} entries", self.n_dots));
            }
        }
        for (name, len) in [
            ("mutual_charging", self.mutual_charging.len()),
            ("mutual_barrier_coupling", self.mutual_barrier_coupling.len()),
            ("pairs", self.pairs.len()),
            ("loading.tables", self.loading.tables.len()),
        ] {
            if len != N_PAIRS {
                out.push(format!("{name} needs {N_PAIRS} entries"));
            }
        }
        if out.is_empty() {
            for (p, &(l, r)) in PAIRS.iter().enumerate() {
                let em = self.mutual_charging[p];
                if !(em > 0.0 && self.charging_energy[l] > em && self.charging_energy[r] > em) {
                    out.push(format!("pair {}: need charging_energy > mutual_charging > 0", p + 1));
                }
            }
            for (p, t) in self.loading.tables.iter().enumerate() {
                if t.thresholds.windows(2).any(|w| w[1] <= w[0]) {
                    out.push(format!("loading table of DQD {} is not strictly increasing", p + 1));
                }
                if self.gate_index(&t.gate).is_none() {
                    out.push(format!("loading table of DQD {} names unknown gate {}", p + 1, t.gate));
                }
            }
        }
        if let Err(e) = self.operating_point.check_complete(self) {
            out.push(e.to_string());
        }
        for q in &self.qubits {
            if q.dot_index == 0 || q.dot_index > self.n_dots {
                out.push(format!("qubit dot_index {} out of range", q.dot_index));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.invariant_violations().first() {
            Some(msg) => Err(Error::Config(msg.clone())),
            None => Ok(()),
        }
    }
}

fn default_lever_arms() -> Vec<Vec<f64>> {
    let n_gates = 2 * N_DOTS + 1;
    let mut rows = vec![vec![0.0; n_gates]; N_DOTS];
    for (i, row) in rows.iter_mut().enumerate() {
        for j in 0..N_DOTS {
            row[j] = match i.abs_diff(j) {
                0 => 0.20,
                1 => 0.05,
                2 => 0.02,
                _ => 0.0,
            };
        }
        // Barrier J_k (1-based) sits between dots k and k+1.
        let dot = i + 1;
        for k in 1..N_DOTS {
            let col = N_DOTS + k - 1;
            row[col] = if k + 1 == dot || k == dot {
                0.06
            } else if k + 2 == dot || k == dot + 1 {
                0.015
            } else {
                0.0
            };
        }
    }
    let set1 = 2 * N_DOTS - 1;
    let set2 = 2 * N_DOTS;
    rows[0][set1] = 0.03;
    rows[1][set1] = 0.01;
    rows[7][set2] = 0.03;
    rows[6][set2] = 0.01;
    rows
}

fn default_operating_point() -> GateVoltages {
    let mut v = GateVoltages::default();
    let plungers = [1.1635, 0.8365, 1.0044, 0.9956, 0.9698, 1.0302, 0.889, 1.111];
    for (i, volts) in plungers.iter().enumerate() {
        v.set(&format!("P{}", i + 1), *volts);
    }
    // Even-indexed barriers separate the cells and sit far more negative.
    let barriers = [0.90, 0.30, 0.90, 0.30, 0.90, 0.30, 0.90];
    for (i, volts) in barriers.iter().enumerate() {
        v.set(&format!("J{}", i + 1), *volts);
    }
    v.set("SET1", 2.0);
    v.set("SET2", 2.0);
    v
}

fn default_loading_table(gate: &str) -> LoadingTable {
    let mut thresholds = Vec::with_capacity(16);
    let mut v = 0.60;
    let mut step = 0.040;
    for _ in 0..16 {
        thresholds.push((v * 1e6_f64).round() / 1e6);
        v += step;
        step *= 0.93;
    }
    LoadingTable { gate: gate.to_owned(), thresholds }
}

/// Default per-qubit parameters. Rabi frequencies span 141–204.5 kHz and the
/// g-factors span exactly 2.17e-3, with every intra-cell pair separated by
/// at least 1.15e-3. Coherence times are the best reported values and are
/// representative rather than per-qubit measurements.
pub fn default_qubits() -> Vec<QubitParams> {
    let dg = [0.0, 2.17, 0.35, 1.60, 1.95, 0.60, 1.25, 0.10];
    let rabi = [141.0e3, 204.5e3, 152.0e3, 168.0e3, 175.0e3, 190.0e3, 160.0e3, 183.0e3];
    (0..N_DOTS)
        .map(|i| QubitParams {
            dot_index: i + 1,
            g_factor: 1.998 + dg[i] * 1e-3,
            rabi_frequency: rabi[i],
            t2_star: 41e-6,
            t2_hahn: 1.31e-3,
        })
        .collect()
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            n_dots: N_DOTS,
            plunger_gates: (1..=N_DOTS).map(|i| format!("P{i}")).collect(),
            barrier_gates: (1..N_DOTS).map(|i| format!("J{i}")).collect(),
            sensor_gates: vec!["SET1".into(), "SET2".into()],
            lever_arms: default_lever_arms(),
            charging_energy: vec![2.5; N_DOTS],
            mutual_charging: vec![0.5; N_PAIRS],
            mutual_barrier_coupling: vec![2.0; N_PAIRS],
            dot_offset: vec![389.113, 389.107, 416.151, 416.164, 412.118, 412.112, 401.756, 401.754],
            max_electrons: 20,
            operating_point: default_operating_point(),
            pairs: vec![
                PairConfig { control: [9, 3], readout: [10, 2], readout_detuning: 0.0267 },
                PairConfig { control: [3, 3], readout: [4, 2], readout_detuning: 0.0267 },
                PairConfig { control: [3, 7], readout: [4, 6], readout_detuning: 0.0267 },
                PairConfig { control: [3, 1], readout: [4, 0], readout_detuning: 0.0267 },
            ],
            loading: LoadingConfig {
                tables: ["P2", "P4", "P5", "P7"].iter().map(|g| default_loading_table(g)).collect(),
                flood_voltage: 1.6,
                block_voltage: -0.4,
            },
            exclusions: Vec::new(),
            qubits: default_qubits(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = DeviceConfig::default();
        assert_eq!(cfg.invariant_violations(), Vec::<String>::new());
        assert_eq!(cfg.gates().count(), 17);
    }

    #[test]
    fn missing_gate_is_named() {
        let mut cfg = DeviceConfig::default();
        cfg.operating_point.0.remove("J3");
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("J3"), "{err}");
    }

    #[test]
    fn parity_predicates() {
        let c = ChargeConfiguration::new(vec![9, 3, 3, 3, 3, 7, 3, 1]);
        assert!((0..4).all(|p| c.is_odd_odd(p)));
        let r = ChargeConfiguration::new(vec![10, 2, 4, 2, 4, 6, 4, 0]);
        assert!((0..4).all(|p| r.is_even_even(p)));
        assert_eq!(c.totals(), [12, 6, 10, 4]);
        assert_eq!(c.to_string(), "(9-3) (3-3) (3-7) (3-1)");
    }

    #[test]
    fn lever_arm_diagonal_must_dominate() {
        let mut cfg = DeviceConfig::default();
        cfg.lever_arms[2][3] = 0.25;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn mutual_charging_must_be_below_charging_energy() {
        let mut cfg = DeviceConfig::default();
        cfg.mutual_charging[0] = 3.0;
        assert!(cfg.validate().is_err());
    }
}
