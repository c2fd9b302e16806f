//! Shared shot pipeline: cell setup, per-shot state and frame, readout and
//! tomography.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{ExperimentSpec, ShotRecord};
use crate::analysis::{bloch_vector, debiased_length, BlochEstimate, Counts, ProjectionCounts};
use crate::config::Config;
use crate::device::{is_central_pair, PairConfig};
use crate::error::{Error, Result};
use crate::readout::{
    cascade_armed, initialize_parity, odd_label_probability, psb_project, sense, InitKind, Parity, ReadoutMode,
};
use crate::rng::{derive_key, purpose, stream};
use crate::spin::{
    apply_rotation, dephase, propagate, Backend, Coupling, Drive, Frame, NoiseModel, NoiseTrace, Pulse, SpinPair,
    SpinState,
};

/// How readout results are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Born-rule projection and sampled sensor signals per shot.
    #[default]
    Shots,
    /// Exact label probabilities, averaged over noise realizations.
    Expectation,
}

/// Static description of the double dot an experiment runs on.
#[derive(Debug, Clone)]
pub(crate) struct Cell {
    pub pair: usize,
    /// Position of the target inside the pair (0 = left).
    pub target: usize,
    pub control: usize,
    pub spin: SpinPair,
    pub noise: NoiseModel,
    pub pair_cfg: PairConfig,
    pub mode: ReadoutMode,
}

impl Cell {
    pub fn new(cfg: &Config, spec: &ExperimentSpec) -> Result<Cell> {
        let dot = spec.qubit - 1;
        let pair = dot / 2;
        let target = dot % 2;
        let q = |d: usize| {
            cfg.device.qubit(d).ok_or_else(|| Error::Usage(format!("no qubit parameters for dot {}", d + 1)))
        };
        let (left, right) = (q(2 * pair)?, q(2 * pair + 1)?);
        let spin = SpinPair::new(left, right, &cfg.field);
        let noise = if spec.noise {
            let drift = cfg.noise.drift && spec.params.drift && spec.backend == Backend::Stochastic;
            let calibrate = if drift { Backend::Stochastic } else { Backend::Analytic };
            let mut n = NoiseModel::from_qubits([left, right], calibrate, cfg.noise.ou_tau, spec.seed);
            n.backend = spec.backend;
            n
        } else {
            NoiseModel { backend: spec.backend, seed: spec.seed, ..NoiseModel::noiseless() }
        };
        let noise = NoiseModel {
            envelope_exponent_ramsey: cfg.noise.envelope_exponent_ramsey,
            envelope_exponent_hahn: cfg.noise.envelope_exponent_hahn,
            ou_steps_per_tau: cfg.noise.ou_steps_per_tau,
            ..noise
        };
        let pair_cfg = cfg
            .device
            .pairs
            .get(pair)
            .cloned()
            .ok_or_else(|| Error::Usage(format!("no pair configuration for DQD {}", pair + 1)))?;
        let mode = if is_central_pair(pair) {
            let eps = spec.params.lateral_eps.unwrap_or(cfg.sensor.cascade_center);
            cascade_armed(Parity::Odd, eps, &cfg.sensor).mode()
        } else {
            ReadoutMode::Direct
        };
        Ok(Cell { pair, target, control: 1 - target, spin, noise, pair_cfg, mode })
    }

    /// Every shot sees the same dynamics.
    pub fn deterministic(&self) -> bool {
        self.noise.backend == Backend::Analytic || self.noise.is_silent()
    }

    pub fn analytic(&self) -> bool {
        self.noise.backend == Backend::Analytic
    }
}

/// Mutable state of one shot.
pub(crate) struct Shot<'a> {
    cell: &'a Cell,
    pub state: SpinState,
    pub frame: Frame,
    trace: NoiseTrace,
    pub t: f64,
}

impl<'a> Shot<'a> {
    fn new(cell: &'a Cell, trace: NoiseTrace) -> Self {
        Self { cell, state: SpinState::ground(), frame: Frame::default(), trace, t: 0.0 }
    }

    /// Noise-free shot starting from `↓↓`.
    pub fn standalone(cell: &'a Cell) -> Self {
        Self::new(cell, NoiseTrace::silent())
    }

    /// Bloch vector of `q` expressed in its rotating frame.
    pub fn bloch_in_frame(&self, q: usize) -> [f64; 3] {
        let [x, y, z] = self.state.bloch(q);
        let (s, c) = self.frame.phase[q].sin_cos();
        [c * x + s * y, -s * x + c * y, z]
    }

    /// Calibrated rotation of qubit `q` about the frame axis offset by `axis`.
    pub fn rot(&mut self, q: usize, angle: f64, axis: f64) {
        self.state = apply_rotation(&self.state, q, angle, self.frame.phase[q] + axis);
    }

    pub fn x(&mut self, q: usize, angle: f64) {
        self.rot(q, angle, 0.0);
    }

    pub fn virtual_z(&mut self, q: usize, theta: f64) {
        self.frame = self.frame.apply_virtual_z(q, theta);
    }

    /// Free evolution with exchange `j` (secular) for `dur`.
    pub fn wait(&mut self, dur: f64, j: f64) {
        let pulse = if j == 0.0 { Pulse::idle() } else { Pulse::exchange(j, Coupling::Secular) };
        self.state = propagate(&self.state, &self.cell.spin, &pulse, dur, &self.frame, &self.trace, self.t);
        self.t += dur;
    }

    pub fn drive(&mut self, drive: Drive, dur: f64) {
        self.state =
            propagate(&self.state, &self.cell.spin, &Pulse::drive(drive), dur, &self.frame, &self.trace, self.t);
        self.t += dur;
    }

    /// Analytic-backend Ramsey damping for `free` seconds of free evolution.
    pub fn ramsey_envelope(&mut self, free: f64) {
        if self.cell.analytic() {
            for q in 0..2 {
                self.state = dephase(&self.state, q, self.cell.noise.ramsey_envelope(q, free));
            }
        }
    }

    /// Analytic-backend echo damping for total echo time `total`.
    pub fn echo_envelope(&mut self, total: f64) {
        if self.cell.analytic() {
            for q in 0..2 {
                self.state = dephase(&self.state, q, self.cell.noise.hahn_envelope(q, total));
            }
        }
    }
}

/// Final rotation applied to the target before parity readout, as
/// `(angle, axis offset)`.
pub(crate) type Projection = Option<(f64, f64)>;

/// Projections mapping `+X, −X, +Y, −Y, Z` onto up.
pub(crate) const TOMOGRAPHY: [Projection; 5] =
    [Some((-PI / 2.0, PI / 2.0)), Some((PI / 2.0, PI / 2.0)), Some((PI / 2.0, 0.0)), Some((-PI / 2.0, 0.0)), None];

#[derive(Debug, Clone, Default)]
pub(crate) struct PointResult {
    pub hits: u64,
    pub shots: u64,
    /// Probability the target was found up.
    pub prob: f64,
    pub herald_failures: u64,
    pub records: Vec<ShotRecord>,
}

impl PointResult {
    pub fn counts(&self) -> Counts {
        Counts { hits: self.hits, shots: self.shots }
    }
}

/// Everything that identifies one measured point.
pub(crate) struct Point<'a> {
    pub cfg: &'a Config,
    pub spec: &'a ExperimentSpec,
    pub cell: &'a Cell,
    pub index: &'a [usize],
    pub variant: u32,
    /// Longest time a shot can run, for noise sampling (s).
    pub horizon: f64,
    /// Partner qubit is up at readout, which inverts the parity mapping.
    pub partner_up: bool,
}

/// Runs `seq` for every shot of a point and reads out the target.
pub(crate) fn measure<F>(p: &Point, seq: &F, projection: Projection) -> Result<PointResult>
where
    F: Fn(&mut Shot),
{
    let cell = p.cell;
    let sensor = &p.cfg.sensor;
    let shots = p.spec.shots();
    let finish = |shot: &mut Shot| {
        seq(shot);
        if let Some((angle, axis)) = projection {
            shot.rot(cell.target, angle, axis);
        }
    };
    let fixed = if cell.deterministic() {
        let mut s = Shot::new(cell, NoiseTrace::silent());
        finish(&mut s);
        Some((s.state, s.frame))
    } else {
        None
    };
    let hit_probability = |state: &SpinState| -> Result<f64> {
        let odd = odd_label_probability(state, cell.pair, sensor, cell.mode)?;
        Ok(if p.partner_up { 1.0 - odd } else { odd })
    };
    if p.spec.sampling == super::Sampling::Expectation {
        if let Some((state, _)) = &fixed {
            return Ok(PointResult { prob: hit_probability(state)?, shots: shots as u64, ..Default::default() });
        }
    }
    let mut out = PointResult::default();
    let mut prob_sum = 0.0;
    let mut path: Vec<u64> = p.index.iter().map(|&i| i as u64).collect();
    path.push(p.variant as u64);
    for shot_idx in 0..shots {
        path.push(shot_idx as u64);
        let key = derive_key(p.spec.seed, &path);
        path.pop();
        let (state, frame) = match &fixed {
            Some(f) => f.clone(),
            None => {
                let trace = NoiseTrace::sample(&cell.noise, &mut stream(key, &[purpose::SPIN]), p.horizon);
                let mut s = Shot::new(cell, trace);
                finish(&mut s);
                (s.state, s.frame)
            }
        };
        let record = |herald, outcome, hit| ShotRecord {
            point: p.index.to_vec(),
            variant: p.variant,
            shot: shot_idx,
            herald,
            outcome,
            mode: cell.mode,
            hit,
            frame: frame.phase,
            stream: key,
        };
        if p.spec.sampling == super::Sampling::Expectation {
            prob_sum += hit_probability(&state)?;
            out.shots += 1;
            continue;
        }
        let init = initialize_parity(
            &cell.pair_cfg,
            InitKind::HeraldedDownDown,
            &p.cfg.herald,
            &mut stream(key, &[purpose::HERALD]),
        );
        match init {
            Ok(_) => {}
            Err(Error::Initialization { .. }) => {
                out.herald_failures += 1;
                if p.spec.record_shots {
                    out.records.push(record(false, None, false));
                }
                continue;
            }
            Err(e) => return Err(e),
        }
        let mut rng = stream(key, &[purpose::SENSOR]);
        let (parity, _) = psb_project(&state, &mut rng);
        let outcome = sense(parity, cell.pair, sensor, cell.mode, &mut rng)?;
        let hit = outcome.label.is_odd() != p.partner_up;
        out.shots += 1;
        out.hits += hit as u64;
        if p.spec.record_shots {
            out.records.push(record(true, Some(outcome), hit));
        }
    }
    out.prob = match p.spec.sampling {
        super::Sampling::Expectation => prob_sum / out.shots.max(1) as f64,
        super::Sampling::Shots if out.shots > 0 => out.hits as f64 / out.shots as f64,
        super::Sampling::Shots => f64::NAN,
    };
    Ok(out)
}

pub(crate) struct Tomography {
    pub points: Vec<PointResult>,
}

impl Tomography {
    pub fn prob(&self, k: usize) -> f64 {
        self.points[k].prob
    }

    /// Bloch vector of the target in its frame.
    pub fn bloch(&self, sampling: super::Sampling) -> Result<BlochEstimate> {
        match sampling {
            super::Sampling::Shots => bloch_vector(&self.counts()),
            super::Sampling::Expectation => {
                let vector = [self.prob(0) - self.prob(1), self.prob(2) - self.prob(3), 2.0 * self.prob(4) - 1.0];
                let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
                Ok(BlochEstimate { vector, purity: norm.min(1.0), norm, clipped: norm > 1.0 })
            }
        }
    }

    /// Bloch length without the shot-noise bias; equal to the norm for
    /// expectation sampling.
    pub fn debiased_length(&self, sampling: super::Sampling) -> Result<f64> {
        match sampling {
            super::Sampling::Shots => debiased_length(&self.counts()),
            super::Sampling::Expectation => Ok(self.bloch(sampling)?.norm),
        }
    }

    fn counts(&self) -> ProjectionCounts {
        ProjectionCounts {
            plus_x: self.points[0].counts(),
            minus_x: self.points[1].counts(),
            plus_y: self.points[2].counts(),
            minus_y: self.points[3].counts(),
            z: self.points[4].counts(),
        }
    }

    /// Equatorial phase `atan2(⟨Y⟩, ⟨X⟩)`.
    pub fn phase(&self) -> f64 {
        (self.prob(2) - self.prob(3)).atan2(self.prob(0) - self.prob(1))
    }

    pub fn into_records(self) -> Vec<ShotRecord> {
        self.points.into_iter().flat_map(|p| p.records).collect()
    }
}

/// Measures the projections listed in `which` (indices into
/// [`TOMOGRAPHY`]); the others are left empty.
pub(crate) fn tomography<F>(p: &Point, seq: &F, which: &[usize]) -> Result<Tomography>
where
    F: Fn(&mut Shot),
{
    let mut points = vec![PointResult::default(); TOMOGRAPHY.len()];
    for &k in which {
        let point = Point { variant: p.variant * 8 + k as u32, ..*p };
        points[k] = measure(&point, seq, TOMOGRAPHY[k])?;
    }
    Ok(Tomography { points })
}

pub(crate) const EQUATOR: [usize; 4] = [0, 1, 2, 3];
pub(crate) const ALL_AXES: [usize; 5] = [0, 1, 2, 3, 4];
