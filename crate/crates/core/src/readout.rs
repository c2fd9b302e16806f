//! Spin-to-charge conversion: parity projection by Pauli spin blockade,
//! Gaussian charge-sensor signals, cascaded amplification for the central
//! double dots and the initialization primitives.
//!
//! Odd spin states (`↓↑`, `↑↓`) are unblocked: an electron tunnels to the
//! readout configuration and the sensor signal rises. Even states stay
//! blocked. A label is `Odd` when the raw signal exceeds the threshold.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::device::{is_central_pair, PairConfig};
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::spin::{SpinState, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    /// Parallel spins, blockaded.
    Even,
    /// Antiparallel spins, unblocked.
    Odd,
}

impl Parity {
    pub fn of_basis(index: usize) -> Parity {
        if index == 1 || index == 2 {
            Parity::Odd
        } else {
            Parity::Even
        }
    }

    pub fn is_odd(self) -> bool {
        self == Parity::Odd
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutMode {
    Direct,
    Cascaded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorModel {
    /// Direct readout of a lateral pair.
    pub mu_blocked: f64,
    pub mu_unblocked: f64,
    /// Direct readout of a central pair.
    pub mu_blocked_central: f64,
    pub mu_unblocked_central: f64,
    /// Multiplier on the central separation when the cascade is armed.
    pub cascade_gain: f64,
    pub sigma_signal: f64,
    /// Fixed threshold; `None` uses the midpoint of the active means.
    pub threshold: Option<f64>,
    /// Samples averaged per shot; the noise falls as `1/√n`.
    pub integration_shots: u32,
    /// Lateral detuning at the cascade anticrossing (V).
    pub cascade_center: f64,
    /// Half-width of the arming window (V).
    pub cascade_window: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            mu_blocked: 0.0,
            mu_unblocked: 1.0,
            mu_blocked_central: 0.0,
            mu_unblocked_central: 0.2,
            cascade_gain: 6.0,
            sigma_signal: 0.2,
            threshold: None,
            integration_shots: 1,
            cascade_center: 0.013,
            cascade_window: 0.5e-3,
        }
    }
}

impl SensorModel {
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.mu_unblocked == self.mu_blocked || self.mu_unblocked_central == self.mu_blocked_central {
            out.push("sensor blocked and unblocked means must differ".to_owned());
        }
        if !(self.cascade_gain >= 1.0) {
            out.push("cascade_gain must be >= 1".to_owned());
        }
        if !(self.sigma_signal >= 0.0) {
            out.push("sigma_signal must be >= 0".to_owned());
        }
        if self.integration_shots == 0 {
            out.push("integration_shots must be >= 1".to_owned());
        }
        if !(self.cascade_window >= 0.0) {
            out.push("cascade_window must be >= 0".to_owned());
        }
        out
    }

    /// `(mean even, mean odd)` for readout of `dqd` in `mode`.
    pub fn means(&self, dqd: usize, mode: ReadoutMode) -> Result<(f64, f64)> {
        match (is_central_pair(dqd), mode) {
            (false, ReadoutMode::Direct) => Ok((self.mu_blocked, self.mu_unblocked)),
            (false, ReadoutMode::Cascaded) => {
                Err(Error::Usage(format!("cascaded readout requested for lateral DQD {}", dqd + 1)))
            }
            (true, ReadoutMode::Direct) => Ok((self.mu_blocked_central, self.mu_unblocked_central)),
            (true, ReadoutMode::Cascaded) => Ok((
                self.mu_blocked_central,
                self.mu_blocked_central + self.cascade_gain * (self.mu_unblocked_central - self.mu_blocked_central),
            )),
        }
    }

    pub fn effective_sigma(&self) -> f64 {
        self.sigma_signal / (self.integration_shots.max(1) as f64).sqrt()
    }

    pub fn threshold_for(&self, dqd: usize, mode: ReadoutMode) -> Result<f64> {
        let (e, o) = self.means(dqd, mode)?;
        Ok(self.threshold.unwrap_or(0.5 * (e + o)))
    }

    /// `(P(label odd | even), P(label even | odd))`.
    pub fn error_rates(&self, dqd: usize, mode: ReadoutMode) -> Result<(f64, f64)> {
        let (e, o) = self.means(dqd, mode)?;
        let thr = self.threshold_for(dqd, mode)?;
        let sigma = self.effective_sigma();
        // orientation: odd is reported above the threshold
        let above = |mu: f64| {
            if sigma == 0.0 {
                if mu > thr {
                    1.0
                } else {
                    0.0
                }
            } else {
                1.0 - Normal::new(mu, sigma).expect("finite sensor parameters").cdf(thr)
            }
        };
        Ok((above(e), 1.0 - above(o)))
    }

    /// Visibility implied by the Gaussian sensor at the active threshold.
    pub fn expected_visibility(&self, dqd: usize, mode: ReadoutMode) -> Result<f64> {
        let (false_odd, false_even) = self.error_rates(dqd, mode)?;
        Ok(1.0 - false_odd - false_even)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutOutcome {
    pub raw_signal: f64,
    pub label: Parity,
    pub dqd: usize,
}

/// `[P(even), P(odd)]`.
pub fn parity_probabilities(state: &SpinState) -> [f64; 2] {
    let p = state.populations();
    let odd = (p[1] + p[2]).clamp(0.0, 1.0);
    [1.0 - odd, odd]
}

/// Projective parity measurement with Born-rule sampling.
pub fn psb_project(state: &SpinState, rng: &mut SimRng) -> (Parity, SpinState) {
    let [_, p_odd] = parity_probabilities(state);
    let u: f64 = rng.random();
    let parity = if u < p_odd { Parity::Odd } else { Parity::Even };
    (parity, project(state, parity))
}

/// Normalised projection of `state` onto `parity`.
pub fn project(state: &SpinState, parity: Parity) -> SpinState {
    let keep = |i: usize| Parity::of_basis(i) == parity;
    let p: f64 = (0..4).filter(|&i| keep(i)).map(|i| state.populations()[i]).sum();
    if p <= 0.0 {
        return state.clone();
    }
    state.map_matrix(|m| {
        m.map_with_location(|i, j, v| if keep(i) && keep(j) { v / C64::new(p, 0.0) } else { C64::new(0.0, 0.0) })
    })
}

/// Samples a sensor signal for `parity` and classifies it.
pub fn sense(
    parity: Parity,
    dqd: usize,
    sensor: &SensorModel,
    mode: ReadoutMode,
    rng: &mut SimRng,
) -> Result<ReadoutOutcome> {
    let (e, o) = sensor.means(dqd, mode)?;
    let mu = if parity.is_odd() { o } else { e };
    let z: f64 = StandardNormal.sample(rng);
    let raw_signal = mu + sensor.effective_sigma() * z;
    let thr = sensor.threshold_for(dqd, mode)?;
    let label = if raw_signal > thr { Parity::Odd } else { Parity::Even };
    Ok(ReadoutOutcome { raw_signal, label, dqd })
}

/// Probability that a readout of `state` is labelled odd, without sampling.
pub fn odd_label_probability(state: &SpinState, dqd: usize, sensor: &SensorModel, mode: ReadoutMode) -> Result<f64> {
    let [p_even, p_odd] = parity_probabilities(state);
    let (false_odd, false_even) = sensor.error_rates(dqd, mode)?;
    Ok(p_odd * (1.0 - false_even) + p_even * false_odd)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeArming {
    pub armed: bool,
    pub gain: f64,
}

impl CascadeArming {
    pub fn mode(&self) -> ReadoutMode {
        if self.armed {
            ReadoutMode::Cascaded
        } else {
            ReadoutMode::Direct
        }
    }
}

/// Whether a charge movement in a central pair triggers the lateral cascade.
/// Requires the lateral pair unblocked (odd) and its detuning inside the
/// arming window around the anticrossing.
pub fn cascade_armed(lateral: Parity, eps_lateral: f64, sensor: &SensorModel) -> CascadeArming {
    if lateral.is_odd() && (eps_lateral - sensor.cascade_center).abs() < sensor.cascade_window {
        CascadeArming { armed: true, gain: sensor.cascade_gain }
    } else {
        CascadeArming { armed: false, gain: 1.0 }
    }
}

/// Occupation of a pair after PSB readout: odd parity moves one electron
/// into the readout configuration.
pub fn readout_occupation(pair: &PairConfig, parity: Parity) -> [u32; 2] {
    if parity.is_odd() {
        pair.readout
    } else {
        pair.control
    }
}

/// Occupation of the lateral pair after a cascade; the electron moves
/// within the lateral pair only.
pub fn cascade_occupation(lateral: &PairConfig, armed: bool, central: Parity) -> [u32; 2] {
    readout_occupation(lateral, if armed && central.is_odd() { Parity::Odd } else { Parity::Even })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    MixedOdd,
    HeraldedDownDown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeraldConfig {
    pub probability: f64,
    pub retry_limit: u32,
    /// Relaxation wait in the even-even configuration (s).
    pub relax_wait: f64,
}

impl Default for HeraldConfig {
    fn default() -> Self {
        Self { probability: 0.5, retry_limit: 20, relax_wait: 100e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Initialization {
    pub state: SpinState,
    /// Herald attempts used (1 for the mixed-odd preparation).
    pub attempts: u32,
}

/// Prepares a pair. Mixed-odd relaxes in the even-even charge state and
/// returns diabatically to the odd-odd configuration, leaving an equal
/// mixture of `↓↑` and `↑↓`. Heralded preparation repeats until the herald
/// succeeds or the retry limit is reached.
pub fn initialize_parity(
    pair: &PairConfig,
    kind: InitKind,
    herald: &HeraldConfig,
    rng: &mut SimRng,
) -> Result<Initialization> {
    if pair.control[0] + pair.control[1] != pair.readout[0] + pair.readout[1] {
        return Err(Error::Usage("pair control and readout occupations hold different totals".into()));
    }
    match kind {
        InitKind::MixedOdd => Ok(Initialization { state: SpinState::diagonal([0.0, 0.5, 0.5, 0.0])?, attempts: 1 }),
        InitKind::HeraldedDownDown => {
            for attempt in 1..=herald.retry_limit {
                let u: f64 = rng.random();
                if u < herald.probability {
                    return Ok(Initialization { state: SpinState::ground(), attempts: attempt });
                }
            }
            Err(Error::Initialization { attempts: herald.retry_limit })
        }
    }
}

/// `P(odd | odd prepared) + P(even | even prepared) − 1` from labelled
/// outcomes.
pub fn visibility(even_prepared: &[ReadoutOutcome], odd_prepared: &[ReadoutOutcome]) -> Result<f64> {
    if even_prepared.is_empty() || odd_prepared.is_empty() {
        return Err(Error::Analysis("visibility needs two non-empty histograms".into()));
    }
    let frac = |h: &[ReadoutOutcome], p: Parity| h.iter().filter(|o| o.label == p).count() as f64 / h.len() as f64;
    Ok(frac(odd_prepared, Parity::Odd) + frac(even_prepared, Parity::Even) - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn parity_of_basis_states() {
        let mut rng = stream(1, &[]);
        for _ in 0..20 {
            assert_eq!(psb_project(&SpinState::ground(), &mut rng).0, Parity::Even);
            assert_eq!(psb_project(&SpinState::from_spins(true, false), &mut rng).0, Parity::Odd);
        }
    }

    #[test]
    fn superposition_half_even_and_idempotent() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let z = C64::new(0.0, 0.0);
        let s = SpinState::pure([C64::new(h, 0.0), z, C64::new(h, 0.0), z]).unwrap();
        assert!((parity_probabilities(&s)[0] - 0.5).abs() < 1e-12);
        let mut rng = stream(2, &[]);
        let (p, post) = psb_project(&s, &mut rng);
        for _ in 0..10 {
            assert_eq!(psb_project(&post, &mut rng).0, p);
        }
        post.validate().unwrap();
    }

    #[test]
    fn noiseless_sensor_is_exact() {
        let sensor = SensorModel { sigma_signal: 0.0, ..SensorModel::default() };
        let mut rng = stream(3, &[]);
        for dqd in 0..4 {
            for p in [Parity::Even, Parity::Odd] {
                assert_eq!(sense(p, dqd, &sensor, ReadoutMode::Direct, &mut rng).unwrap().label, p);
            }
        }
    }

    #[test]
    fn gaussian_overlap_error_rates() {
        let n = Normal::new(0.0, 1.0).unwrap();
        let sensor = SensorModel { sigma_signal: 0.2, ..SensorModel::default() };
        let (a, b) = sensor.error_rates(1, ReadoutMode::Direct).unwrap();
        assert!((a - n.cdf(-0.5)).abs() < 1e-12 && (b - n.cdf(-0.5)).abs() < 1e-12);
        let (a, _) = sensor.error_rates(1, ReadoutMode::Cascaded).unwrap();
        assert!((a - n.cdf(-3.0)).abs() < 1e-12);
        assert!(sensor.means(0, ReadoutMode::Cascaded).is_err());
    }

    #[test]
    fn cascade_window_and_blockade() {
        let s = SensorModel::default();
        assert!(cascade_armed(Parity::Odd, s.cascade_center, &s).armed);
        let far = cascade_armed(Parity::Odd, s.cascade_center + 0.01, &s);
        assert!(!far.armed && far.gain == 1.0);
        assert!(!cascade_armed(Parity::Even, s.cascade_center, &s).armed);
    }

    #[test]
    fn herald_limits() {
        let pair = PairConfig { control: [3, 3], readout: [4, 2], readout_detuning: 0.0 };
        let sure = HeraldConfig { probability: 1.0, ..HeraldConfig::default() };
        let init = initialize_parity(&pair, InitKind::HeraldedDownDown, &sure, &mut stream(4, &[])).unwrap();
        assert_eq!(init.state, SpinState::ground());
        let never = HeraldConfig { probability: 0.0, ..HeraldConfig::default() };
        assert!(matches!(
            initialize_parity(&pair, InitKind::HeraldedDownDown, &never, &mut stream(4, &[])),
            Err(Error::Initialization { attempts: 20 })
        ));
        let mixed = initialize_parity(&pair, InitKind::MixedOdd, &sure, &mut stream(4, &[])).unwrap();
        assert_eq!(parity_probabilities(&mixed.state)[1], 1.0);
    }

    #[test]
    fn readout_conserves_pair_totals() {
        let pair = PairConfig { control: [9, 3], readout: [10, 2], readout_detuning: 0.0 };
        for p in [Parity::Even, Parity::Odd] {
            assert_eq!(readout_occupation(&pair, p).iter().sum::<u32>(), 12);
            assert_eq!(cascade_occupation(&pair, true, p).iter().sum::<u32>(), 12);
        }
    }

    #[test]
    fn visibility_limits() {
        let o = |label, raw| ReadoutOutcome { raw_signal: raw, label, dqd: 0 };
        let even = vec![o(Parity::Even, 0.0); 5];
        let odd = vec![o(Parity::Odd, 1.0); 5];
        assert_eq!(visibility(&even, &odd).unwrap(), 1.0);
        assert_eq!(visibility(&even, &even).unwrap(), 0.0);
        assert!(visibility(&[], &odd).is_err());
    }
}
