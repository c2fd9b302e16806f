use rayon::prelude::*;

use super::{ExperimentKind, ExperimentOutput, ExperimentSpec, ShotRecord, Table};
use crate::analysis::optimal_threshold;
use crate::config::Config;
use crate::device::{is_central_pair, N_PAIRS};
use crate::error::{Error, Result};
use crate::readout::{
    cascade_armed, cascade_occupation, readout_occupation, sense, visibility, Parity, ReadoutMode, ReadoutOutcome,
};
use crate::rng::{derive_key, purpose, stream};

/// Lateral pair whose cascade amplifies a central pair.
pub fn lateral_partner(pair: usize) -> Option<usize> {
    match pair {
        1 => Some(0),
        2 => Some(N_PAIRS - 1),
        _ => None,
    }
}

struct SweepPoint {
    even: Vec<ReadoutOutcome>,
    odd: Vec<ReadoutOutcome>,
    armed: bool,
    keys: Vec<u64>,
    conserved: bool,
}

/// Sweeps the lateral detuning while the central pair is prepared
/// alternately even (`↓↓`) and odd (`↑↓`), with the lateral pair held odd.
/// Inside the arming window the central signal is amplified by the cascade.
pub fn run_cascade_calibration(cfg: &Config, spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let pair = (spec.qubit - 1) / 2;
    if !is_central_pair(pair) {
        return Err(Error::Usage(format!("cascade calibration needs a central qubit, got qubit {}", spec.qubit)));
    }
    let lateral = lateral_partner(pair).expect("central pair has a lateral partner");
    let central_cfg = cfg.device.pairs.get(pair).ok_or_else(|| Error::Usage(format!("no DQD {}", pair + 1)))?;
    let lateral_cfg = cfg.device.pairs.get(lateral).ok_or_else(|| Error::Usage(format!("no DQD {}", lateral + 1)))?;
    let eps = spec.axis(cfg, "eps_lateral")?.values();
    let sensor = &cfg.sensor;
    let shots = spec.shots().max(2);
    let half = shots / 2;

    let points = eps
        .par_iter()
        .enumerate()
        .map(|(i, &e)| {
            let arming = cascade_armed(Parity::Odd, e, sensor);
            let mode = arming.mode();
            let mut p = SweepPoint {
                even: Vec::new(),
                odd: Vec::new(),
                armed: arming.armed,
                keys: Vec::new(),
                conserved: true,
            };
            for s in 0..shots {
                let parity = if s < half { Parity::Even } else { Parity::Odd };
                let key = derive_key(spec.seed, &[i as u64, s as u64]);
                let out = sense(parity, pair, sensor, mode, &mut stream(key, &[purpose::SENSOR]))?;
                let total = |o: [u32; 2]| o[0] + o[1];
                let c_before = total(central_cfg.control);
                let c_after = total(readout_occupation(central_cfg, parity));
                let l_before = total(lateral_cfg.control);
                let l_after = total(cascade_occupation(lateral_cfg, arming.armed, parity));
                p.conserved &= c_before == c_after && l_before == l_after;
                p.keys.push(key);
                if parity.is_odd() {
                    p.odd.push(out);
                } else {
                    p.even.push(out);
                }
            }
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = ExperimentOutput::new(
        ExperimentKind::CascadeCalibration,
        spec.seed,
        &["eps_lateral (V)", "visibility", "armed", "expected_visibility"],
    );
    let mut hist = Table::new(&["eps_lateral (V)", "prepared_odd", "raw_signal (a.u.)", "label_odd"]);
    let mut records = Vec::new();
    let mut conserved = true;
    for (i, (p, &e)) in points.iter().zip(&eps).enumerate() {
        let mode = if p.armed { ReadoutMode::Cascaded } else { ReadoutMode::Direct };
        let v = visibility(&p.even, &p.odd)?;
        let expected = sensor.expected_visibility(pair, mode)?;
        out.rows.push(vec![e, v, p.armed as u8 as f64, expected]);
        conserved &= p.conserved;
        for (k, o) in p.even.iter().chain(&p.odd).enumerate() {
            let odd = k >= p.even.len();
            hist.rows.push(vec![e, odd as u8 as f64, o.raw_signal, o.label.is_odd() as u8 as f64]);
            if spec.record_shots {
                records.push(ShotRecord {
                    point: vec![i],
                    variant: odd as u32,
                    shot: k as u32,
                    herald: true,
                    outcome: Some(*o),
                    mode,
                    hit: o.label.is_odd() == odd,
                    frame: [0.0; 2],
                    stream: p.keys[k],
                });
            }
        }
        let key = if p.armed { "cascaded" } else { "direct" };
        let signals = |v: &[ReadoutOutcome]| v.iter().map(|o| o.raw_signal).collect::<Vec<_>>();
        out.histograms.entry(format!("{key}_even")).or_default().extend(signals(&p.even));
        out.histograms.entry(format!("{key}_odd")).or_default().extend(signals(&p.odd));
    }
    for key in ["direct", "cascaded"] {
        let (Some(even), Some(odd)) =
            (out.histograms.get(&format!("{key}_even")), out.histograms.get(&format!("{key}_odd")))
        else {
            out.warnings.push(format!("no {key}-mode points in the sweep"));
            continue;
        };
        let t = optimal_threshold(even, odd)?;
        out.summary.insert(format!("{key}_threshold"), t.threshold);
        out.summary.insert(format!("{key}_visibility"), t.visibility);
    }
    let peak = out.rows.iter().map(|r| r[1]).fold(f64::NEG_INFINITY, f64::max);
    out.summary.insert("peak_visibility".into(), peak);
    out.summary.insert("charge_conserved".into(), conserved as u8 as f64);
    out.tables.insert("signals".into(), hist);
    out.records = records;
    Ok(out)
}
