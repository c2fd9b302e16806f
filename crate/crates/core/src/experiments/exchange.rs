use std::f64::consts::{PI, TAU};

use rayon::prelude::*;

use super::engine::{tomography, Cell, Point, Shot, Tomography, EQUATOR};
use super::{ExperimentKind, ExperimentOutput, ExperimentSpec, Table};
use crate::analysis::{fit_turnon, linear_fit, unwrap_phases};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::spin::{exchange_j, CZ_VALIDITY_RATIO};

fn wrap_2pi(p: f64) -> f64 {
    p.rem_euclid(TAU)
}

fn wrap_pi(p: f64) -> f64 {
    let w = (p + PI).rem_euclid(TAU) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Target phase accumulated during a fixed exchange period over a grid of
/// barrier voltage and detuning, with the control held down. Points inside
/// configured exclusion windows are reported as NaN.
pub fn run_fingerprint(cfg: &Config, spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let cell = Cell::new(cfg, spec)?;
    let vj = spec.axis(cfg, "vj")?.values();
    let eps = spec.axis(cfg, "eps")?.values();
    let wait = spec.params.wait;
    let q = cell.target;
    let barrier = cfg.device.pair_barrier(cell.pair).to_owned();
    let measure_at = |index: &[usize], variant: u32, j: f64| -> Result<Tomography> {
        let seq = |s: &mut Shot| {
            s.x(q, PI / 2.0);
            s.wait(wait, j);
            s.ramsey_envelope(wait);
        };
        let p = Point { cfg, spec, cell: &cell, index, variant, horizon: wait, partner_up: false };
        tomography(&p, &seq, &EQUATOR)
    };
    let reference = measure_at(&[vj.len(), eps.len()], 1, 0.0)?.phase();
    let grid: Vec<(usize, usize)> = (0..vj.len()).flat_map(|i| (0..eps.len()).map(move |k| (i, k))).collect();
    let results = grid
        .par_iter()
        .map(|&(i, k)| {
            if cfg.device.exclusions.iter().any(|w| w.contains(&barrier, vj[i], "eps", eps[k])) {
                return Ok(None);
            }
            let j = exchange_j(&cfg.exchange, vj[i], eps[k]).hz;
            Ok(Some((j, measure_at(&[i, k], 0, j)?)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = ExperimentOutput::new(
        ExperimentKind::Fingerprint,
        spec.seed,
        &["vj (V)", "eps (V)", "exchange (Hz)", "phase (rad)", "model_phase (rad)", "valid"],
    );
    let mut excluded = 0;
    let mut records = Vec::new();
    for (&(i, k), r) in grid.iter().zip(results) {
        match r {
            None => {
                excluded += 1;
                out.rows.push(vec![vj[i], eps[k], f64::NAN, f64::NAN, f64::NAN, 0.0]);
            }
            Some((j, tomo)) => {
                let phase = wrap_2pi(reference - tomo.phase());
                out.rows.push(vec![vj[i], eps[k], j, phase, wrap_2pi(PI * j * wait), 1.0]);
                records.extend(tomo.into_records());
            }
        }
    }
    out.summary.insert("excluded_points".into(), excluded as f64);
    out.summary.insert("wait".into(), wait);
    out.records = records;
    Ok(out)
}

/// Decoupled exchange oscillations: `X_{π/2}` on the target, then
/// `t/2 – π(both) – t/2 – π(both)` with exchange on. Static Zeeman offsets
/// refocus while the exchange phase accumulates at `J/2`. The per-voltage
/// frequencies feed a turn-on fit of `log10 J` against `vj`.
pub fn run_exchange_spectroscopy(cfg: &Config, spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let cell = Cell::new(cfg, spec)?;
    let vj = spec.axis(cfg, "vj")?.values();
    let times = spec.axis(cfg, "time")?.values();
    let eps = spec.params.eps;
    let (q, c) = (cell.target, cell.control);
    let horizon = times.iter().cloned().fold(0.0, f64::max);
    let grid: Vec<(usize, usize)> = (0..vj.len()).flat_map(|i| (0..times.len()).map(move |k| (i, k))).collect();
    let results = grid
        .par_iter()
        .map(|&(i, k)| {
            let j = exchange_j(&cfg.exchange, vj[i], eps).hz;
            let t = times[k];
            let seq = |s: &mut Shot| {
                s.x(q, PI / 2.0);
                s.wait(t / 2.0, j);
                s.x(q, PI);
                s.x(c, PI);
                s.wait(t / 2.0, j);
                s.x(q, PI);
                s.x(c, PI);
                s.echo_envelope(t);
            };
            let index = [i, k];
            let p = Point { cfg, spec, cell: &cell, index: &index, variant: 0, horizon, partner_up: false };
            tomography(&p, &seq, &EQUATOR)
        })
        .collect::<Result<Vec<_>>>()?;

    let t_span = times.iter().cloned().fold(0.0, f64::max) - times.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut out = ExperimentOutput::new(
        ExperimentKind::ExchangeSpectroscopy,
        spec.seed,
        &["vj (V)", "exchange_fit (Hz)", "frequency (Hz)", "exchange_model (Hz)", "included"],
    );
    let mut phases = Table::new(&["vj (V)", "time (s)", "phase (rad)"]);
    let mut records = Vec::new();
    let (mut fit_v, mut fit_j) = (Vec::new(), Vec::new());
    let mut it = results.into_iter();
    for &v in &vj {
        let raw: Vec<f64> = (0..times.len())
            .map(|_| it.next().expect("grid size"))
            .map(|tomo| {
                let ph = tomo.phase();
                records.extend(tomo.into_records());
                ph
            })
            .collect();
        let acc: Vec<f64> = raw.iter().map(|p| wrap_pi(raw[0] - p)).collect();
        let acc = unwrap_phases(&acc);
        for (t, p) in times.iter().zip(&acc) {
            phases.rows.push(vec![v, *t, *p]);
        }
        let line = linear_fit(&times, &acc)?;
        let f = line.slope / TAU;
        let included = f * t_span >= 1.0;
        let j_fit = 2.0 * f;
        if included {
            fit_v.push(v);
            fit_j.push(j_fit);
        }
        let j_model = exchange_j(&cfg.exchange, v, eps).hz;
        out.rows.push(vec![v, if included { j_fit } else { f64::NAN }, f, j_model, included as u8 as f64]);
    }
    let fit = fit_turnon(&fit_v, &fit_j)?;
    out.summary.insert("slope_fit".into(), fit.value("slope"));
    out.summary.insert("slope_sigma".into(), fit.sigma("slope"));
    out.summary.insert("slope_configured".into(), cfg.exchange.slope);
    out.summary.insert("included_points".into(), fit_v.len() as f64);
    out.fits.insert("turnon".into(), fit);
    out.tables.insert("phases".into(), phases);
    out.records = records;
    Ok(out)
}

/// Per-repetition phase slope of `measured` against the number of CZ
/// repetitions for every trial correction of that qubit.
struct SlopeScan {
    corrections: Vec<f64>,
    slopes: Vec<f64>,
    grid: Table,
}

struct CzGate {
    j: f64,
    duration: f64,
    /// Virtual-Z corrections applied after every gate before the trial one.
    pre: [f64; 2],
}

#[allow(clippy::too_many_arguments)]
fn phase_per_repetition(
    cfg: &Config,
    spec: &ExperimentSpec,
    cell: &Cell,
    gate: &CzGate,
    measured: usize,
    corrections: [f64; 2],
    reps: &[usize],
    index_base: usize,
) -> Result<(Vec<f64>, f64)> {
    let horizon = gate.duration * reps.iter().copied().max().unwrap_or(0) as f64;
    let phases = reps
        .iter()
        .enumerate()
        .map(|(r, &n)| {
            let seq = |s: &mut Shot| {
                s.x(measured, PI / 2.0);
                for _ in 0..n {
                    s.wait(gate.duration, gate.j);
                    s.virtual_z(0, gate.pre[0] + corrections[0]);
                    s.virtual_z(1, gate.pre[1] + corrections[1]);
                }
                s.ramsey_envelope(gate.duration * n as f64);
            };
            let index = [index_base, r];
            let point = Point { cfg, spec, cell, index: &index, variant: measured as u32, horizon, partner_up: false };
            Ok(tomography(&point, &seq, &EQUATOR)?.phase())
        })
        .collect::<Result<Vec<f64>>>()?;
    let acc = unwrap_phases(&phases);
    let x: Vec<f64> = reps.iter().map(|&n| n as f64).collect();
    let slope = linear_fit(&x, &acc)?.slope;
    Ok((acc, slope))
}

fn scan(
    cfg: &Config,
    spec: &ExperimentSpec,
    cell: &Cell,
    gate: &CzGate,
    measured: usize,
    corrections: &[f64],
    reps: &[usize],
) -> Result<SlopeScan> {
    let results = corrections
        .par_iter()
        .enumerate()
        .map(|(i, &theta)| {
            let mut z = [0.0; 2];
            z[measured] = theta;
            phase_per_repetition(cfg, spec, cell, gate, measured, z, reps, i)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grid = Table::new(&["correction (rad)", "repetitions", "phase (rad)"]);
    let mut slopes = Vec::new();
    for (&theta, (acc, slope)) in corrections.iter().zip(results) {
        for (&n, p) in reps.iter().zip(&acc) {
            grid.rows.push(vec![theta, n as f64, *p]);
        }
        slopes.push(slope);
    }
    Ok(SlopeScan { corrections: corrections.to_vec(), slopes, grid })
}

/// Correction where the per-repetition slope crosses zero, with the local
/// slope derivative. Brackets spanning the `±π` wrap are skipped.
fn zero_crossing(s: &SlopeScan) -> Option<(f64, f64)> {
    let n = s.corrections.len();
    let mut best: Option<(f64, f64, f64)> = None;
    for a in 0..n {
        let b = (a + 1) % n;
        let (sa, sb) = (s.slopes[a], s.slopes[b]);
        let (ta, mut tb) = (s.corrections[a], s.corrections[b]);
        if b == 0 {
            tb += TAU;
        }
        if sa * sb > 0.0 || (sb - sa).abs() >= PI / 2.0 || tb <= ta {
            continue;
        }
        let theta = if sb == sa { ta } else { ta + (tb - ta) * (-sa) / (sb - sa) };
        let deriv = (sb - sa) / (tb - ta);
        let quality = sa.abs().min(sb.abs());
        if best.is_none_or(|(_, _, q)| quality < q) {
            best = Some((wrap_2pi(theta), deriv, quality));
        }
    }
    best.map(|(t, d, _)| (t, d))
}

/// Sweeps a virtual-Z correction against the number of CZ repetitions for
/// each qubit and picks the correction that makes the phase independent of
/// the repetition count. The calibrated gate is then checked for a
/// conditional π phase and for `CZ²` acting as identity.
pub fn run_cz_calibration(cfg: &Config, spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let cell = Cell::new(cfg, spec)?;
    let corrections = spec.axis(cfg, "correction")?.values();
    let reps_axis = spec.axis(cfg, "repetitions")?;
    let mut reps: Vec<usize> = reps_axis.values().iter().map(|r| r.round().max(0.0) as usize).collect();
    reps.dedup();
    if reps.len() < 2 {
        return Err(Error::Usage("cz calibration needs at least two repetition counts".into()));
    }
    let eps = spec.params.eps;
    let vj = cfg.exchange.barrier_for(spec.params.cz_exchange, eps);
    let ex = exchange_j(&cfg.exchange, vj, eps);
    let gate =
        CzGate { j: ex.hz, duration: 1.0 / (2.0 * ex.hz), pre: spec.params.cz_precorrection.unwrap_or([0.0; 2]) };
    let mut out = ExperimentOutput::new(
        ExperimentKind::CzCalibration,
        spec.seed,
        &["correction (rad)", "repetitions", "phase (rad)"],
    );
    if ex.hz > CZ_VALIDITY_RATIO * cell.spin.zeeman_difference().abs() {
        out.warnings.push(format!(
            "exchange {:.3e} Hz exceeds {} x Zeeman difference {:.3e} Hz",
            ex.hz,
            CZ_VALIDITY_RATIO,
            cell.spin.zeeman_difference().abs()
        ));
    }

    let (t, c) = (cell.target, cell.control);
    let mut chosen = [0.0; 2];
    let mut slopes = Table::new(&["correction (rad)", "slope_target (rad)", "slope_control (rad)"]);
    let mut scans = Vec::new();
    for &measured in &[t, c] {
        let view = Cell { target: measured, control: 1 - measured, ..cell.clone() };
        let cell = &view;
        let s = scan(cfg, spec, cell, &gate, measured, &corrections, &reps)?;
        let (coarse, deriv) = zero_crossing(&s).ok_or_else(|| {
            Error::Calibration(format!(
                "no repetition-independent correction for qubit {}",
                2 * cell.pair + measured + 1
            ))
        })?;
        let mut z = [0.0; 2];
        z[measured] = coarse;
        let (_, residual) = phase_per_repetition(cfg, spec, cell, &gate, measured, z, &reps, corrections.len())?;
        let step = if deriv.abs() > 0.5 { residual / deriv } else { residual * deriv.signum() };
        let refined = wrap_2pi(coarse - step);
        z[measured] = refined;
        let (_, check) = phase_per_repetition(cfg, spec, cell, &gate, measured, z, &reps, corrections.len() + 1)?;
        if check.abs() > spec.params.cz_tolerance {
            return Err(Error::Calibration(format!(
                "residual phase {check:.3} rad per repetition on qubit {} exceeds tolerance",
                2 * cell.pair + measured + 1
            )));
        }
        chosen[measured] = refined;
        let key = if measured == t { "target" } else { "control" };
        out.summary.insert(format!("correction_{key}"), refined);
        out.summary.insert(format!("residual_slope_{key}"), check);
        scans.push(s);
    }
    for (i, &theta) in corrections.iter().enumerate() {
        slopes.rows.push(vec![theta, scans[0].slopes[i], scans[1].slopes[i]]);
    }
    out.rows = std::mem::take(&mut scans[0].grid.rows);
    out.tables.insert("control_scan".into(), std::mem::take(&mut scans[1].grid));
    out.tables.insert("slopes".into(), slopes);

    let total = [gate.pre[0] + chosen[0], gate.pre[1] + chosen[1]];
    // conditional phase: target Ramsey with the control down and up
    let cond = |control_up: bool, variant: u32| -> Result<f64> {
        let seq = |s: &mut Shot| {
            if control_up {
                s.x(c, PI);
            }
            s.x(t, PI / 2.0);
            s.wait(gate.duration, gate.j);
            s.virtual_z(t, total[t]);
            s.virtual_z(c, total[c]);
            s.ramsey_envelope(gate.duration);
        };
        let index = [corrections.len() + 2, 0];
        let p =
            Point { cfg, spec, cell: &cell, index: &index, variant, horizon: gate.duration, partner_up: control_up };
        Ok(tomography(&p, &seq, &EQUATOR)?.phase())
    };
    let conditional = wrap_pi(cond(true, 10)? - cond(false, 11)?);
    out.summary.insert("conditional_phase".into(), conditional);
    out.summary.insert("conditional_phase_error_deg".into(), (PI - conditional.abs()).to_degrees());

    // CZ² on computational basis states, noiseless
    let ideal = Cell { noise: crate::spin::NoiseModel::noiseless(), ..cell.clone() };
    let mut pop_err: f64 = 0.0;
    let mut identity_err: f64 = 0.0;
    for basis in 0..4 {
        let mut s = Shot::standalone(&ideal);
        s.state = crate::spin::SpinState::basis(basis);
        for _ in 0..2 {
            s.wait(gate.duration, gate.j);
            s.virtual_z(t, total[t]);
            s.virtual_z(c, total[c]);
        }
        let p = s.state.populations();
        for (k, v) in p.iter().enumerate() {
            pop_err = pop_err.max((v - if k == basis { 1.0 } else { 0.0 }).abs());
        }
    }
    {
        // two corrected gates leave a control-down target superposition in place
        let mut s = Shot::standalone(&ideal);
        s.x(t, PI / 2.0);
        let before = s.bloch_in_frame(t);
        for _ in 0..2 {
            s.wait(gate.duration, gate.j);
            s.virtual_z(t, total[t]);
            s.virtual_z(c, total[c]);
        }
        let after = s.bloch_in_frame(t);
        for k in 0..3 {
            identity_err = identity_err.max((after[k] - before[k]).abs());
        }
    }
    out.summary.insert("cz_squared_population_error".into(), pop_err);
    out.summary.insert("even_repetition_identity_error".into(), identity_err);
    out.summary.insert("exchange".into(), gate.j);
    out.summary.insert("gate_duration".into(), gate.duration);
    out.summary.insert("barrier_voltage".into(), vj);
    out.summary.insert("model_correction".into(), wrap_2pi(PI * gate.j * gate.duration));
    Ok(out)
}
