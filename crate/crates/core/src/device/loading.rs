//! Staged electron loading (A→G).
//!
//! The 2DEG of both SET islands floods the array, the central cells are
//! filled through the lateral ones and trapped first, then the lateral cells
//! are filled and trapped, and the operating voltages are restored.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ground_state_occupation, ChargeConfiguration, DeviceConfig, GateVoltages, LoadingTable, N_PAIRS};
use crate::error::{Error, Result};
use crate::rng::{self, purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StageLabel {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
}

impl StageLabel {
    pub const ALL: [StageLabel; 7] = [Self::A, Self::B, Self::C, Self::D, Self::E, Self::F, Self::G];
}

/// One stop of the loading routine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadingStage {
    pub label: StageLabel,
    pub voltages: GateVoltages,
    /// Dots (1-based) covered by the electron gas at this stage.
    pub extent: BTreeSet<usize>,
    /// Electron number per cell once it is defined (`None` while the cell
    /// is still connected to the reservoir or not yet loaded).
    pub totals: [Option<u32>; N_PAIRS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadingOutcome {
    pub occupation: ChargeConfiguration,
    pub stages: Vec<LoadingStage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadingOptions {
    /// Uniform jitter (±V) on every loading voltage.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for LoadingOptions {
    fn default() -> Self {
        Self { jitter: 0.0, seed: 0 }
    }
}

/// Electrons captured at loading-gate voltage `v`.
pub fn loaded_count(table: &LoadingTable, v: f64) -> u32 {
    table.thresholds.partition_point(|&t| t <= v) as u32
}

/// Voltage that captures exactly `target` electrons, placed midway between
/// neighbouring thresholds.
pub fn loading_voltage(table: &LoadingTable, target: u32, dqd: usize) -> Result<f64> {
    let th = &table.thresholds;
    let n = target as usize;
    if n > th.len() || th.is_empty() {
        return Err(Error::Loading {
            dqd: dqd + 1,
            reason: format!("target of {target} electrons is outside the calibration table ({} entries)", th.len()),
        });
    }
    let first_gap = if th.len() > 1 { th[1] - th[0] } else { 0.05 };
    let v = match n {
        0 => th[0] - 0.5 * first_gap,
        n if n == th.len() => {
            let last_gap = if th.len() > 1 { th[n - 1] - th[n - 2] } else { first_gap };
            th[n - 1] + 0.5 * last_gap
        }
        n => 0.5 * (th[n - 1] + th[n]),
    };
    Ok(v)
}

/// Half the distance to the nearest threshold; jitter beyond this would
/// change the captured number.
fn loading_margin(table: &LoadingTable, v: f64) -> f64 {
    table.thresholds.iter().map(|t| (t - v).abs()).fold(f64::INFINITY, f64::min)
}

pub fn run_loading_sequence(cfg: &DeviceConfig, targets: &[u32; N_PAIRS]) -> Result<LoadingOutcome> {
    run_loading_sequence_with(cfg, targets, &LoadingOptions::default())
}

pub fn run_loading_sequence_with(
    cfg: &DeviceConfig,
    targets: &[u32; N_PAIRS],
    opts: &LoadingOptions,
) -> Result<LoadingOutcome> {
    let mut rng = rng::stream(opts.seed, &[purpose::LOADING]);
    let mut load_v = [0.0; N_PAIRS];
    for (p, table) in cfg.loading.tables.iter().enumerate() {
        let v = loading_voltage(table, targets[p], p)?;
        let margin = loading_margin(table, v);
        let j = if opts.jitter > 0.0 { rng.random_range(-opts.jitter..=opts.jitter) } else { 0.0 };
        if j.abs() >= margin {
            return Err(Error::Loading {
                dqd: p + 1,
                reason: format!("loading jitter {j:.4} V exceeds calibration margin {margin:.4} V"),
            });
        }
        load_v[p] = v + j;
    }

    let op = &cfg.operating_point;
    let flood = cfg.loading.flood_voltage;
    let block = cfg.loading.block_voltage;
    let all: BTreeSet<usize> = (1..=cfg.n_dots).collect();
    let mut stages = Vec::with_capacity(7);
    let mut totals: [Option<u32>; N_PAIRS] = [None; N_PAIRS];

    // A: initial operating potential, array empty.
    stages.push(LoadingStage {
        label: StageLabel::A,
        voltages: op.clone(),
        extent: BTreeSet::new(),
        totals: [Some(0); N_PAIRS],
    });

    // B: flood from both SETs, symmetric around J4.
    let mut v = op.clone();
    for g in cfg.plunger_gates.iter().chain(&cfg.barrier_gates) {
        v.set(g, flood);
    }
    stages.push(LoadingStage { label: StageLabel::B, voltages: v.clone(), extent: all.clone(), totals });

    // C: central loading voltages reduce the Fermi sea under P4/P5.
    let central = [1usize, 2];
    for &p in &central {
        v.set(&cfg.loading.tables[p].gate, load_v[p]);
        totals[p] = Some(loaded_count(&cfg.loading.tables[p], v.require(&cfg.loading.tables[p].gate)?));
    }
    v.set("J4", flood);
    stages.push(LoadingStage { label: StageLabel::C, voltages: v.clone(), extent: all.clone(), totals });

    // D: trap central electrons behind J2, P3, J3 and J5, P6, J6.
    for g in ["J2", "P3", "J3", "J5", "P6", "J6"] {
        v.set(g, block);
    }
    stages.push(LoadingStage {
        label: StageLabel::D,
        voltages: v.clone(),
        extent: [1, 2, 7, 8].into_iter().collect(),
        totals,
    });

    // E: lateral loading voltages on P2/P7 with J1/J7 open.
    for p in [0usize, 3] {
        let gate = &cfg.loading.tables[p].gate;
        v.set(gate, load_v[p]);
        totals[p] = Some(loaded_count(&cfg.loading.tables[p], v.require(gate)?));
    }
    v.set("J1", flood);
    v.set("J7", flood);
    stages.push(LoadingStage {
        label: StageLabel::E,
        voltages: v.clone(),
        extent: [1, 2, 7, 8].into_iter().collect(),
        totals,
    });

    // F: trap under P2/P7 and push the Fermi sea back to the SETs.
    for g in ["P1", "J1", "J7", "P8"] {
        v.set(g, block);
    }
    stages.push(LoadingStage { label: StageLabel::F, voltages: v.clone(), extent: BTreeSet::new(), totals });

    // G: back to the operating point with every cell isolated.
    let held: Vec<u32> = totals.iter().map(|t| t.unwrap_or(0)).collect();
    for (p, (&have, &want)) in held.iter().zip(targets).enumerate() {
        if have != want {
            return Err(Error::Loading { dqd: p + 1, reason: format!("captured {have} electrons, wanted {want}") });
        }
    }
    let occupation = ground_state_occupation(cfg, op, Some(&held))?;
    stages.push(LoadingStage { label: StageLabel::G, voltages: op.clone(), extent: BTreeSet::new(), totals });

    Ok(LoadingOutcome { occupation, stages })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_targets_reach_control_occupations() {
        let cfg = DeviceConfig::default();
        let out = run_loading_sequence(&cfg, &[12, 6, 10, 4]).unwrap();
        assert_eq!(out.occupation.occupation, vec![9, 3, 3, 3, 3, 7, 3, 1]);
        let labels: Vec<_> = out.stages.iter().map(|s| s.label).collect();
        assert_eq!(labels, StageLabel::ALL.to_vec());
        assert_eq!(out.stages[0].voltages, out.stages[6].voltages);
        assert_eq!(out.stages[2].totals[1], Some(6));
        assert_eq!(out.stages[2].totals[2], Some(10));
        assert_eq!(out.stages[5].totals, [Some(12), Some(6), Some(10), Some(4)]);
    }

    #[test]
    fn zero_targets_give_empty_array() {
        let cfg = DeviceConfig::default();
        let out = run_loading_sequence(&cfg, &[0; 4]).unwrap();
        assert_eq!(out.occupation, ChargeConfiguration::empty());
    }

    #[test]
    fn out_of_table_target_names_the_dqd() {
        let cfg = DeviceConfig::default();
        let err = run_loading_sequence(&cfg, &[12, 6, 10, 40]).unwrap_err();
        assert!(matches!(err, Error::Loading { dqd: 4, .. }), "{err}");
    }

    #[test]
    fn raising_p7_loads_more_electrons() {
        let cfg = DeviceConfig::default();
        let table = &cfg.loading.tables[3];
        assert_eq!(table.gate, "P7");
        let counts: Vec<u32> = (0..200).map(|i| loaded_count(table, 0.5 + i as f64 * 0.005)).collect();
        assert!(counts.windows(2).all(|w| w[1] >= w[0]));
        assert!(counts.last() > counts.first());
    }

    #[test]
    fn totals_never_change_after_trapping() {
        let cfg = DeviceConfig::default();
        let out = run_loading_sequence_with(&cfg, &[12, 6, 10, 4], &LoadingOptions { jitter: 0.002, seed: 5 }).unwrap();
        let after = |from: usize, p: usize| out.stages[from..].iter().map(move |s| s.totals[p]).collect::<Vec<_>>();
        for p in [1, 2] {
            let t = after(3, p);
            assert!(t.windows(2).all(|w| w[0] == w[1]));
        }
        for p in [0, 3] {
            let t = after(5, p);
            assert!(t.windows(2).all(|w| w[0] == w[1]));
        }
    }
}
