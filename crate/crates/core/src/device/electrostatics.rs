//! Constant-interaction charge model and stability maps.

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ChargeConfiguration, DetuningAxis, DeviceConfig, GateVoltages, N_PAIRS, PAIRS};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Energies closer than this (meV) are treated as degenerate.
const DEGENERACY_TOL: f64 = 1e-9;

/// Open mode exchanges electrons with the reservoir; isolated mode fixes the
/// total of the cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChargeMode {
    Open,
    Isolated(u32),
}

/// Electrochemical drive of every dot, `1000 * sum_g alpha_ig V_g - offset_i` (meV).
pub fn chemical_potentials(cfg: &DeviceConfig, v: &GateVoltages) -> Result<Vec<f64>> {
    let gate_volts: Vec<f64> = cfg.gates().map(|g| v.require(g)).collect::<Result<_>>()?;
    Ok(cfg
        .lever_arms
        .iter()
        .zip(&cfg.dot_offset)
        .map(|(row, off)| 1000.0 * row.iter().zip(&gate_volts).map(|(a, x)| a * x).sum::<f64>() - off)
        .collect())
}

fn pair_terms(cfg: &DeviceConfig, pair: usize, v: &GateVoltages) -> Result<([f64; 2], f64, [f64; 2])> {
    let (l, r) = PAIRS[pair];
    let ec = [cfg.charging_energy[l], cfg.charging_energy[r]];
    let em = cfg.mutual_charging_at(pair, v);
    if ec[0] <= 0.0 || ec[1] <= 0.0 || ec[0] * ec[1] <= em * em {
        return Err(Error::Model(format!("energy of pair {} is unbounded below (Ec = {:?}, Em = {em})", pair + 1, ec)));
    }
    let mu = chemical_potentials(cfg, v)?;
    Ok((ec, em, [mu[l], mu[r]]))
}

fn energy(ec: [f64; 2], em: f64, mu: [f64; 2], n: [u32; 2]) -> f64 {
    let (a, b) = (n[0] as f64, n[1] as f64);
    0.5 * ec[0] * a * a + 0.5 * ec[1] * b * b + em * a * b - a * mu[0] - b * mu[1]
}

/// Constant-interaction energy (meV) of occupation `n` of one cell.
pub fn pair_energy(cfg: &DeviceConfig, pair: usize, v: &GateVoltages, n: [u32; 2]) -> Result<f64> {
    let (ec, em, mu) = pair_terms(cfg, pair, v)?;
    Ok(energy(ec, em, mu, n))
}

/// Keeps the lowest energy, resolving near-ties toward the
/// lexicographically smaller occupation.
fn consider(best: &mut Option<([u32; 2], f64)>, n: [u32; 2], e: f64) {
    match best {
        Some((bn, be)) if e > *be + DEGENERACY_TOL || (e >= *be - DEGENERACY_TOL && n >= *bn) => {}
        _ => *best = Some((n, e)),
    }
}

fn rounded_candidates(x: f64, lo: u32, hi: u32) -> [u32; 2] {
    let f = x.floor().clamp(lo as f64, hi as f64) as u32;
    [f, (f + 1).min(hi)]
}

/// Ground-state occupation of one cell.
///
/// The energy is a convex quadratic in the occupation, so only the integers
/// bracketing the continuous minimiser need to be compared.
pub fn pair_ground_state(cfg: &DeviceConfig, pair: usize, v: &GateVoltages, mode: ChargeMode) -> Result<[u32; 2]> {
    let (ec, em, mu) = pair_terms(cfg, pair, v)?;
    let mut best = None;
    match mode {
        ChargeMode::Isolated(total) => {
            let t = total as f64;
            let x = (ec[1] * t - em * t + mu[0] - mu[1]) / (ec[0] + ec[1] - 2.0 * em);
            for n1 in rounded_candidates(x, 0, total) {
                let n = [n1, total - n1];
                consider(&mut best, n, energy(ec, em, mu, n));
            }
        }
        ChargeMode::Open => {
            let max = cfg.max_electrons;
            for n1 in 0..=max {
                let x = (mu[1] - em * n1 as f64) / ec[1];
                for n2 in rounded_candidates(x, 0, max) {
                    let n = [n1, n2];
                    consider(&mut best, n, energy(ec, em, mu, n));
                }
            }
        }
    }
    best.map(|(n, _)| n).ok_or_else(|| Error::Model("empty occupation window".into()))
}

/// Ground-state occupation of the whole array. `totals` selects isolated
/// mode with one fixed total per cell; `None` is open mode.
pub fn ground_state_occupation(
    cfg: &DeviceConfig,
    v: &GateVoltages,
    totals: Option<&[u32]>,
) -> Result<ChargeConfiguration> {
    if let Some(t) = totals {
        if t.len() != N_PAIRS {
            return Err(Error::Usage(format!("expected {N_PAIRS} cell totals, got {}", t.len())));
        }
    }
    let mut occ = vec![0; cfg.n_dots];
    for (p, &(l, r)) in PAIRS.iter().enumerate() {
        let mode = totals.map_or(ChargeMode::Open, |t| ChargeMode::Isolated(t[p]));
        let [a, b] = pair_ground_state(cfg, p, v, mode)?;
        occ[l] = a;
        occ[r] = b;
    }
    Ok(ChargeConfiguration::new(occ))
}

/// Left plunger `+eps/2`, right plunger `-eps/2`; every other gate unchanged.
/// Positive detuning therefore favours the left dot.
pub fn apply_detuning(cfg: &DeviceConfig, axis: &DetuningAxis, eps: f64) -> Result<GateVoltages> {
    if axis.pair >= N_PAIRS {
        return Err(Error::Usage(format!("no double dot {}", axis.pair + 1)));
    }
    let (pl, pr) = cfg.pair_plungers(axis.pair);
    let mut out = axis.origin.clone();
    out.set(pl, axis.origin.require(pl)? + eps / 2.0);
    out.set(pr, axis.origin.require(pr)? - eps / 2.0);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapAxis {
    /// Gate name, or `"eps"` for the cell detuning.
    pub gate: String,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl MapAxis {
    pub fn new(gate: &str, start: f64, stop: f64, points: usize) -> Self {
        Self { gate: gate.to_owned(), start, stop, points }
    }

    pub fn values(&self) -> Vec<f64> {
        linspace(self.start, self.stop, self.points)
    }
}

pub(crate) fn linspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![start];
    }
    (0..points).map(|i| start + (stop - start) * i as f64 / (points - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapOptions {
    pub mode: ChargeMode,
    /// Decay length of the sensor weights, in dot pitches.
    pub sensor_decay: f64,
    /// Linear background per volt on each swept axis.
    pub background_slope: f64,
    /// Gaussian noise on the sensor proxy.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self { mode: ChargeMode::Open, sensor_decay: 2.0, background_slope: 0.05, noise_sigma: 0.0, seed: 0 }
    }
}

/// Row-major grid (`y` rows, `x` columns) of sensor-proxy values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityMap {
    pub pair: usize,
    pub x_axis: MapAxis,
    pub y_axis: MapAxis,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub values: Vec<f64>,
    pub occupations: Vec<Option<[u32; 2]>>,
}

impl StabilityMap {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.x.len() + ix]
    }

    pub fn occupation(&self, ix: usize, iy: usize) -> Option<[u32; 2]> {
        self.occupations[iy * self.x.len() + ix]
    }

    pub fn distinct_occupations(&self) -> Vec<[u32; 2]> {
        let mut v: Vec<[u32; 2]> = self.occupations.iter().flatten().copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

fn set_axis(cfg: &DeviceConfig, pair: usize, v: &mut GateVoltages, axis: &str, value: f64) -> Result<()> {
    if axis == "eps" {
        let origin = v.clone();
        *v = apply_detuning(cfg, &DetuningAxis { pair, origin }, value)?;
        Ok(())
    } else if cfg.gate_index(axis).is_some() {
        v.set(axis, value);
        Ok(())
    } else {
        Err(Error::Usage(format!("unknown map axis {axis}")))
    }
}

/// Sensor weight of each dot of a cell: the closer SET sees a larger jump.
fn sensor_weights(pair: usize, decay: f64) -> [f64; 2] {
    let (l, r) = PAIRS[pair];
    let dist = |d: usize| if d < 4 { d as f64 } else { (7 - d) as f64 };
    [(-dist(l) / decay).exp(), (-dist(r) / decay).exp()]
}

/// Sensor-proxy map of one cell over two swept axes around the operating
/// point. Discrete jumps mark charge transitions; points inside a declared
/// exclusion window are `NaN` with no occupation.
pub fn stability_map(
    cfg: &DeviceConfig,
    pair: usize,
    x_axis: &MapAxis,
    y_axis: &MapAxis,
    opts: &MapOptions,
) -> Result<StabilityMap> {
    if x_axis.gate == y_axis.gate {
        return Err(Error::Usage("map axes must be distinct".into()));
    }
    if x_axis.points < 2 || y_axis.points < 2 {
        return Err(Error::Usage("map resolution must be at least 2x2".into()));
    }
    if pair >= N_PAIRS {
        return Err(Error::Usage(format!("no double dot {}", pair + 1)));
    }
    let xs = x_axis.values();
    let ys = y_axis.values();
    let w = sensor_weights(pair, opts.sensor_decay);
    let mut rng = SimRng::seed_from_u64(opts.seed);
    let noise = Normal::new(0.0, opts.noise_sigma.max(0.0)).map_err(|e| Error::Usage(e.to_string()))?;
    let mut values = Vec::with_capacity(xs.len() * ys.len());
    let mut occupations = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            if cfg.exclusions.iter().any(|e| e.contains(&x_axis.gate, x, &y_axis.gate, y)) {
                values.push(f64::NAN);
                occupations.push(None);
                continue;
            }
            let mut v = cfg.operating_point.clone();
            set_axis(cfg, pair, &mut v, &y_axis.gate, y)?;
            set_axis(cfg, pair, &mut v, &x_axis.gate, x)?;
            let n = pair_ground_state(cfg, pair, &v, opts.mode)?;
            let background = opts.background_slope * (x + y);
            let mut s = w[0] * n[0] as f64 + w[1] * n[1] as f64 + background;
            if opts.noise_sigma > 0.0 {
                s += noise.sample(&mut rng);
            }
            values.push(s);
            occupations.push(Some(n));
        }
    }
    Ok(StabilityMap { pair, x_axis: x_axis.clone(), y_axis: y_axis.clone(), x: xs, y: ys, values, occupations })
}
