use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};

use super::engine::Cell;
use super::{ExperimentKind, ExperimentOutput, ExperimentSpec, Sampling};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::readout::{odd_label_probability, psb_project, sense};
use crate::rng::{derive_key, purpose, stream};
use crate::spin::{apply_rotation, propagate, Frame, NoiseTrace, Pulse, SpinState};

const PROBE_PLUS: u64 = 0;
const PROBE_MINUS: u64 = 1;
const SET_SAMPLES: u64 = 2;

/// Two-point Ramsey probe of a residual detuning `residual`: `X_{π/2}`, free
/// evolution `τ`, then projection along `±X`. The difference of the two
/// up-probabilities is odd in the residual.
struct Probe<'a> {
    cfg: &'a Config,
    spec: &'a ExperimentSpec,
    cell: &'a Cell,
    tau: f64,
}

impl Probe<'_> {
    fn up_probability(&self, residual: f64, sign: f64, cycle: u64, branch: u64) -> Result<f64> {
        let q = self.cell.target;
        let shots = self.spec.shots();
        let sigma = if self.spec.noise { self.cell.noise.qubits[q].sigma_quasistatic } else { 0.0 };
        let mut acc = 0.0;
        for shot in 0..shots {
            let key = derive_key(self.spec.seed, &[cycle, branch, shot as u64]);
            let mut trace = NoiseTrace::silent();
            let z: f64 = if sigma > 0.0 { StandardNormal.sample(&mut stream(key, &[purpose::SPIN])) } else { 0.0 };
            trace.static_offset[q] = residual + sigma * z;
            let frame = Frame::default();
            let mut state = apply_rotation(&SpinState::ground(), q, PI / 2.0, 0.0);
            state = propagate(&state, &self.cell.spin, &Pulse::idle(), self.tau, &frame, &trace, 0.0);
            // quadrature orthogonal to the prepared state
            state = apply_rotation(&state, q, sign * PI / 2.0, PI / 2.0);
            acc += match self.spec.sampling {
                Sampling::Expectation => {
                    odd_label_probability(&state, self.cell.pair, &self.cfg.sensor, self.cell.mode)?
                }
                Sampling::Shots => {
                    let mut rng = stream(key, &[purpose::SENSOR]);
                    let (parity, _) = psb_project(&state, &mut rng);
                    let out = sense(parity, self.cell.pair, &self.cfg.sensor, self.cell.mode, &mut rng)?;
                    out.label.is_odd() as u8 as f64
                }
            };
            if sigma == 0.0 && self.spec.sampling == Sampling::Expectation {
                return Ok(acc);
            }
        }
        Ok(acc / shots as f64)
    }

    fn signal(&self, residual: f64, cycle: u64) -> Result<f64> {
        Ok(self.up_probability(residual, 1.0, cycle, PROBE_PLUS)?
            - self.up_probability(residual, -1.0, cycle, PROBE_MINUS)?)
    }
}

/// SET current at gate offset `v` from a Gaussian Coulomb peak at `peak`.
fn set_current(v: f64, peak: f64, width: f64) -> f64 {
    (-0.5 * ((v - peak) / width).powi(2)).exp()
}

/// Vertex of the parabola through three equally spaced samples, limited to
/// one probe spacing from the centre.
fn parabolic_vertex(minus: f64, centre: f64, plus: f64, spacing: f64) -> f64 {
    let curvature = minus - 2.0 * centre + plus;
    if curvature >= 0.0 {
        return if plus > minus {
            spacing
        } else if minus > plus {
            -spacing
        } else {
            0.0
        };
    }
    (spacing * (minus - plus) / (2.0 * curvature)).clamp(-spacing, spacing)
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

/// Closed-loop tracking of a random-walk Larmor drift and a random-walk SET
/// peak. Each cycle probes the residual detuning with a two-point Ramsey
/// measurement and updates the drive frequency, then re-centres the SET gate
/// from three current samples. Runs strictly sequentially.
pub fn run_feedback(cfg: &Config, spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let pp = &spec.params;
    if !(pp.probe_time > 0.0) {
        return Err(Error::Usage("probe_time must be positive".into()));
    }
    let cell = Cell::new(cfg, spec)?;
    let probe = Probe { cfg, spec, cell: &cell, tau: pp.probe_time };
    let capture = 1.0 / (4.0 * pp.probe_time);

    // sign and scale of the probe response around zero residual
    let calib =
        Probe { spec: &ExperimentSpec { noise: false, sampling: Sampling::Expectation, ..spec.clone() }, ..probe };
    let full_scale = calib.signal(capture, u64::MAX)?;
    if full_scale.abs() < 1e-6 {
        return Err(Error::Calibration("feedback probe has no contrast".into()));
    }
    let contrast = full_scale.abs() * cell.noise.ramsey_envelope(cell.target, pp.probe_time).max(1e-3);
    let orientation = full_scale.signum();

    let mut out = ExperimentOutput::new(
        ExperimentKind::FeedbackDemo,
        spec.seed,
        &[
            "cycle",
            "larmor_drift (Hz)",
            "correction (Hz)",
            "residual (Hz)",
            "estimate (Hz)",
            "lock_lost",
            "set_peak (V)",
            "set_operating_point (V)",
            "set_error (V)",
        ],
    );
    let (mut drift, mut correction) = (0.0, 0.0);
    let (mut peak, mut operating) = (0.0, 0.0);
    let mut lock_lost = 0u32;
    for cycle in 0..pp.cycles {
        let c = cycle as u64;
        let mut rng = stream(spec.seed, &[purpose::DRIFT, c]);
        let (zl, zs): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
        drift += pp.larmor_step * zl;
        if pp.inject_cycle == Some(cycle) {
            drift += pp.inject_step;
        }
        peak += pp.set_step * zs;

        let residual = drift - correction;
        let lost = residual.abs() > capture;
        if lost {
            lock_lost += 1;
            out.warnings.push(format!("lock lost at cycle {cycle}: residual {residual:.3e} Hz"));
        }
        let signal = probe.signal(residual, c)?;
        let estimate = orientation * (signal / contrast).clamp(-1.0, 1.0).asin() / (2.0 * PI * pp.probe_time);
        correction += pp.gain * estimate;

        let mut srng = stream(derive_key(spec.seed, &[c, SET_SAMPLES]), &[purpose::SENSOR]);
        let mut sample = |v: f64| {
            let z: f64 = StandardNormal.sample(&mut srng);
            set_current(v, peak, pp.set_width) + pp.set_noise * z
        };
        let (m, z0, p) = (sample(operating - pp.set_probe), sample(operating), sample(operating + pp.set_probe));
        operating += parabolic_vertex(m, z0, p, pp.set_probe);
        out.rows.push(vec![
            cycle as f64,
            drift,
            correction,
            residual,
            estimate,
            lost as u8 as f64,
            peak,
            operating,
            operating - peak,
        ]);
    }
    let col = |i: usize| out.rows.iter().map(move |r| r[i]);
    let larmor_rms = rms(col(3));
    let larmor_uncorrected = rms(col(1));
    let set_rms = rms(col(8));
    let set_uncorrected = rms(col(6));
    let max_correction = col(2).fold(0.0, |a: f64, b| a.max(b.abs()));
    out.summary.insert("larmor_rms_residual".into(), larmor_rms);
    out.summary.insert("larmor_rms_uncorrected".into(), larmor_uncorrected);
    out.summary.insert("set_rms_error".into(), set_rms);
    out.summary.insert("set_rms_uncorrected".into(), set_uncorrected);
    out.summary.insert("max_abs_correction".into(), max_correction);
    out.summary.insert("lock_lost_events".into(), lock_lost as f64);
    out.summary.insert("capture_range".into(), capture);
    Ok(out)
}
