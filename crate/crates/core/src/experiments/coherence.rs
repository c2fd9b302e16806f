use std::f64::consts::PI;

use rayon::prelude::*;

use super::engine::{measure, tomography, Cell, Point, Shot, ALL_AXES};
use super::{ExperimentKind, ExperimentOutput, ExperimentSpec};
use crate::analysis::{fit_chevron, fit_decay, rabi_probability, DecayModel, FitResult};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::spin::Drive;

pub(crate) fn require_converged(name: &str, fit: &FitResult) -> Result<()> {
    if fit.converged {
        Ok(())
    } else {
        Err(Error::NonConvergence { fit: name.to_owned(), residual: fit.residual_norm })
    }
}

/// Finite drive pulses on a heralded `↓↓` pair over (detuning, duration).
/// The excited probability follows the detuned Rabi formula.
pub fn run_chevron(cfg: &Config, spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let cell = Cell::new(cfg, spec)?;
    let det = spec.axis(cfg, "detuning")?.values();
    let dur = spec.axis(cfg, "duration")?.values();
    let horizon = dur.iter().cloned().fold(0.0, f64::max);
    let grid: Vec<(usize, usize)> = (0..det.len()).flat_map(|i| (0..dur.len()).map(move |j| (i, j))).collect();
    let results = grid
        .par_iter()
        .map(|&(i, j)| {
            let drive = Drive { target: cell.target, offset: det[i], phase: 0.0, amplitude: 1.0 };
            let seq = |s: &mut Shot| s.drive(drive, dur[j]);
            let index = [i, j];
            let p = Point { cfg, spec, cell: &cell, index: &index, variant: 0, horizon, partner_up: false };
            measure(&p, &seq, None)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = ExperimentOutput::new(
        ExperimentKind::Chevron,
        spec.seed,
        &["detuning (Hz)", "duration (s)", "p_odd", "stderr", "model"],
    );
    let fr = cell.spin.rabi[cell.target];
    let mut grid_values = vec![vec![0.0; dur.len()]; det.len()];
    let mut failures = 0;
    for (&(i, j), r) in grid.iter().zip(&results) {
        let se = (r.prob * (1.0 - r.prob) / r.shots.max(1) as f64).sqrt();
        grid_values[i][j] = r.prob;
        failures += r.herald_failures;
        out.rows.push(vec![det[i], dur[j], r.prob, se, rabi_probability(fr, det[i], dur[j])]);
    }
    let (chi2, dof) = symmetry_chi2(&det, &grid_values, spec.shots() as f64);
    let fit = fit_chevron(&det, &dur, &grid_values)?;
    require_converged("chevron", &fit)?;
    out.summary.insert("rabi_frequency_configured".into(), fr);
    out.summary.insert("rabi_frequency_fit".into(), fit.value("fR"));
    out.summary.insert("center_fit".into(), fit.value("f0"));
    out.summary.insert("symmetry_chi2".into(), chi2);
    out.summary.insert("symmetry_dof".into(), dof as f64);
    out.summary.insert("herald_failures".into(), failures as f64);
    out.fits.insert("chevron".into(), fit);
    out.records = results.into_iter().flat_map(|r| r.records).collect();
    Ok(out)
}

/// χ² of the differences between mirrored detunings `±Δ`, with binomial
/// variances. Returns `(χ², number of compared pairs)`.
pub fn symmetry_chi2(det: &[f64], values: &[Vec<f64>], shots: f64) -> (f64, usize) {
    let tol = 1e-9 * det.iter().map(|d| d.abs()).fold(1.0, f64::max);
    let mut chi2 = 0.0;
    let mut dof = 0;
    for (i, &d) in det.iter().enumerate() {
        if d <= 0.0 {
            continue;
        }
        let Some(m) = det.iter().position(|&e| (e + d).abs() < tol) else { continue };
        for (a, b) in values[i].iter().zip(&values[m]) {
            let pbar = 0.5 * (a + b);
            let var = 2.0 * (pbar * (1.0 - pbar)).max(1.0 / shots) / shots;
            chi2 += (a - b).powi(2) / var;
            dof += 1;
        }
    }
    (chi2, dof)
}

/// `X_{π/2}`, free evolution, full single-qubit tomography. The Bloch-vector
/// length decays with the Ramsey envelope; the fit uses the length with the
/// shot-noise floor removed.
pub fn run_ramsey_purity(cfg: &Config, spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let cell = Cell::new(cfg, spec)?;
    let delays = spec.axis(cfg, "delay")?.values();
    let horizon = delays.iter().cloned().fold(0.0, f64::max);
    let q = cell.target;
    let results = delays
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let seq = |s: &mut Shot| {
                s.x(q, PI / 2.0);
                s.wait(t, 0.0);
                s.ramsey_envelope(t);
            };
            let index = [i];
            let p = Point { cfg, spec, cell: &cell, index: &index, variant: 0, horizon, partner_up: false };
            tomography(&p, &seq, &ALL_AXES)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = ExperimentOutput::new(
        ExperimentKind::RamseyPurity,
        spec.seed,
        &["delay (s)", "purity", "x", "y", "z", "clipped", "purity_debiased"],
    );
    let mut purity = Vec::with_capacity(delays.len());
    for (t, tomo) in delays.iter().zip(&results) {
        let b = tomo.bloch(spec.sampling)?;
        let length = tomo.debiased_length(spec.sampling)?;
        purity.push(length.min(1.0));
        out.rows.push(vec![*t, b.purity, b.vector[0], b.vector[1], b.vector[2], b.clipped as u8 as f64, length]);
        if b.clipped {
            out.warnings.push(format!("purity clipped at delay {t:e} s (norm {:.4})", b.norm));
        }
    }
    let fit = fit_decay(&delays, &purity, DecayModel::GaussianRamsey)?;
    require_converged("ramsey", &fit)?;
    out.summary.insert("t2_star_fit".into(), fit.value("T"));
    out.summary.insert("t2_star_configured".into(), cell.noise.qubits[q].t2_star());
    out.fits.insert("ramsey".into(), fit);
    out.records = results.into_iter().flat_map(|t| t.into_records()).collect();
    Ok(out)
}

/// `X_{π/2} – τ – X_π – τ – ±X_{π/2}` with amplitude
/// `P↑(−X) − P↑(+X)` against the total delay `2τ`. An echo that does not
/// decay within the sweep reports an infinite `T2_Hahn`.
pub fn run_hahn(cfg: &Config, spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let cell = Cell::new(cfg, spec)?;
    let delays = spec.axis(cfg, "delay")?.values();
    let horizon = delays.iter().cloned().fold(0.0, f64::max);
    let q = cell.target;
    let results = delays
        .par_iter()
        .enumerate()
        .map(|(i, &total)| {
            let seq = |s: &mut Shot| {
                s.x(q, PI / 2.0);
                s.wait(total / 2.0, 0.0);
                s.x(q, PI);
                s.wait(total / 2.0, 0.0);
                s.echo_envelope(total);
            };
            let index = [i];
            let plus = Point { cfg, spec, cell: &cell, index: &index, variant: 0, horizon, partner_up: false };
            let minus = Point { variant: 1, ..plus };
            Ok((measure(&plus, &seq, Some((PI / 2.0, 0.0)))?, measure(&minus, &seq, Some((-PI / 2.0, 0.0)))?))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = ExperimentOutput::new(
        ExperimentKind::Hahn,
        spec.seed,
        &["delay (s)", "amplitude", "p_up_plus_x", "p_up_minus_x"],
    );
    let mut amp = Vec::with_capacity(delays.len());
    for (t, (plus, minus)) in delays.iter().zip(&results) {
        let a = minus.prob - plus.prob;
        out.rows.push(vec![*t, a, plus.prob, minus.prob]);
        amp.push(a.clamp(-0.1, 1.1));
    }
    let fit = fit_decay(&delays, &amp, DecayModel::StretchedHahn)?;
    let t2 = if fit.value("A") > 3.0 * fit.sigma("A") {
        require_converged("hahn", &fit)?;
        fit.value("T")
    } else {
        out.warnings.push("no echo decay resolved within the sweep".into());
        f64::INFINITY
    };
    out.summary.insert("t2_hahn_fit".into(), t2);
    out.summary.insert("t2_hahn_configured".into(), cell.noise.qubits[q].t2_hahn);
    out.summary.insert("t2_star_configured".into(), cell.noise.qubits[q].t2_star());
    out.fits.insert("hahn".into(), fit);
    out.records = results.into_iter().flat_map(|(a, b)| a.records.into_iter().chain(b.records)).collect();
    Ok(out)
}
