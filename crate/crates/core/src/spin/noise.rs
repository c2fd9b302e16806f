//! Larmor-frequency noise: quasi-static Gaussian offsets plus an
//! Ornstein–Uhlenbeck slow drift, or analytic decay envelopes.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::QubitParams;
use crate::analysis::{fit_decay, DecayModel};
use crate::rng::{self, purpose, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Noiseless unitaries with analytic envelopes on the coherences.
    Analytic,
    /// Per-shot sampled frequency offsets.
    Stochastic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitNoise {
    /// Standard deviation of the per-shot static offset (Hz).
    pub sigma_quasistatic: f64,
    /// Stationary standard deviation of the OU drift (Hz).
    pub ou_sigma: f64,
    /// OU correlation time (s).
    pub ou_tau: f64,
    /// Echo time used by the analytic backend (s).
    pub t2_hahn: f64,
}

impl QubitNoise {
    pub fn quiet() -> Self {
        Self { sigma_quasistatic: 0.0, ou_sigma: 0.0, ou_tau: 1e-3, t2_hahn: f64::INFINITY }
    }

    /// Ramsey time implied by the quasi-static width, `1/(√2 π σ)`.
    pub fn t2_star(&self) -> f64 {
        if self.sigma_quasistatic > 0.0 {
            1.0 / (std::f64::consts::SQRT_2 * PI * self.sigma_quasistatic)
        } else {
            f64::INFINITY
        }
    }
}

/// Width giving a Gaussian Ramsey envelope `exp(-(t/T2*)^2)`.
pub fn sigma_for_t2_star(t2_star: f64) -> f64 {
    1.0 / (std::f64::consts::SQRT_2 * PI * t2_star)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub backend: Backend,
    pub qubits: [QubitNoise; 2],
    pub envelope_exponent_ramsey: f64,
    pub envelope_exponent_hahn: f64,
    /// OU grid resolution in steps per correlation time.
    pub ou_steps_per_tau: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            backend: Backend::Analytic,
            qubits: [QubitNoise::quiet(), QubitNoise::quiet()],
            envelope_exponent_ramsey: 2.0,
            envelope_exponent_hahn: 2.0,
            ou_steps_per_tau: 100.0,
            seed: 0,
        }
    }

    /// Noise of a cell derived from its qubits. For the stochastic backend the
    /// OU drift is calibrated so the echo decays with the configured T2_Hahn.
    pub fn from_qubits(params: [&QubitParams; 2], backend: Backend, ou_tau: f64, seed: u64) -> Self {
        let qubits = params.map(|q| {
            let ou_sigma = match backend {
                Backend::Stochastic if q.t2_hahn.is_finite() => calibrate_ou_sigma(q.t2_hahn, ou_tau),
                _ => 0.0,
            };
            QubitNoise { sigma_quasistatic: sigma_for_t2_star(q.t2_star), ou_sigma, ou_tau, t2_hahn: q.t2_hahn }
        });
        Self { backend, qubits, seed, ..Self::noiseless() }
    }

    pub fn is_silent(&self) -> bool {
        self.qubits.iter().all(|q| q.sigma_quasistatic == 0.0 && q.ou_sigma == 0.0)
    }

    pub fn ramsey_envelope(&self, qubit: usize, t: f64) -> f64 {
        let t2 = self.qubits[qubit].t2_star();
        if t2.is_finite() {
            (-(t.abs() / t2).powf(self.envelope_exponent_ramsey)).exp()
        } else {
            1.0
        }
    }

    pub fn hahn_envelope(&self, qubit: usize, total: f64) -> f64 {
        let t2 = self.qubits[qubit].t2_hahn;
        if t2.is_finite() {
            (-(total.abs() / t2).powf(self.envelope_exponent_hahn)).exp()
        } else {
            1.0
        }
    }
}

/// One shot's frequency offsets for both qubits: a static part plus an OU
/// trajectory sampled on a uniform grid and held piecewise constant.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrace {
    pub dt: f64,
    pub static_offset: [f64; 2],
    pub ou: [Vec<f64>; 2],
}

impl NoiseTrace {
    pub fn silent() -> Self {
        Self { dt: f64::INFINITY, static_offset: [0.0; 2], ou: [Vec::new(), Vec::new()] }
    }

    /// Samples offsets covering `[0, horizon]`.
    pub fn sample(model: &NoiseModel, rng: &mut SimRng, horizon: f64) -> Self {
        let static_offset: [f64; 2] = std::array::from_fn(|q| {
            let z: f64 = StandardNormal.sample(rng);
            model.qubits[q].sigma_quasistatic * z
        });
        let tau = model.qubits.iter().filter(|q| q.ou_sigma > 0.0).map(|q| q.ou_tau).fold(f64::INFINITY, f64::min);
        if !tau.is_finite() {
            return Self { dt: f64::INFINITY, static_offset, ou: [Vec::new(), Vec::new()] };
        }
        let dt = tau / model.ou_steps_per_tau;
        let n = (horizon / dt).ceil() as usize + 1;
        let ou = std::array::from_fn(|q| {
            let qn = &model.qubits[q];
            if qn.ou_sigma == 0.0 {
                return vec![0.0; n];
            }
            let a = (-dt / qn.ou_tau).exp();
            let kick = qn.ou_sigma * (1.0 - a * a).sqrt();
            let z0: f64 = StandardNormal.sample(rng);
            let mut x = qn.ou_sigma * z0;
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                out.push(x);
                let z: f64 = StandardNormal.sample(rng);
                x = a * x + kick * z;
            }
            out
        });
        Self { dt, static_offset, ou }
    }

    pub fn has_drift(&self) -> bool {
        !self.ou[0].is_empty()
    }

    fn ou_at(&self, qubit: usize, k: usize) -> f64 {
        let v = &self.ou[qubit];
        if v.is_empty() {
            0.0
        } else {
            v[k.min(v.len() - 1)]
        }
    }

    /// Offset of `qubit` at time `t` (Hz).
    pub fn offset(&self, qubit: usize, t: f64) -> f64 {
        let k = if self.has_drift() { (t / self.dt).floor().max(0.0) as usize } else { 0 };
        self.static_offset[qubit] + self.ou_at(qubit, k)
    }

    /// Boundaries of the piecewise-constant segments inside `[t0, t1]`.
    pub fn segments(&self, t0: f64, t1: f64) -> Vec<(f64, f64)> {
        if !self.has_drift() || t1 <= t0 {
            return vec![(t0, t1)];
        }
        let mut out = Vec::new();
        let mut a = t0;
        while a < t1 {
            let mut k = (a / self.dt).floor() + 1.0;
            if k * self.dt <= a {
                k += 1.0;
            }
            let b = (k * self.dt).min(t1);
            out.push((a, b));
            a = b;
        }
        out
    }

    /// `∫ offset dt` over `[t0, t1]` (cycles·Hz·s = cycles).
    pub fn integral(&self, qubit: usize, t0: f64, t1: f64) -> f64 {
        self.segments(t0, t1).into_iter().map(|(a, b)| self.offset(qubit, 0.5 * (a + b)) * (b - a)).sum()
    }
}

/// Independent traces for `n_shots` shots on `[0, horizon]`, one RNG stream
/// per shot derived from the model seed.
pub fn sample_noise(model: &NoiseModel, n_shots: usize, horizon: f64) -> Vec<NoiseTrace> {
    (0..n_shots)
        .map(|shot| {
            let mut rng = rng::stream(model.seed, &[purpose::NOISE, shot as u64]);
            NoiseTrace::sample(model, &mut rng, horizon)
        })
        .collect()
}

/// Variance of the echo phase (rad²) after total time `total` for OU noise
/// with stationary deviation `sigma` (Hz) and correlation time `tau`.
pub fn echo_phase_variance(sigma: f64, tau: f64, total: f64) -> f64 {
    let x = total / tau;
    let bracket = if x < 1e-3 {
        // series of x - 3 + 4e^{-x/2} - e^{-x}
        x.powi(3) / 12.0 - x.powi(4) / 32.0
    } else {
        x - 3.0 + 4.0 * (-x / 2.0).exp() - (-x).exp()
    };
    (2.0 * PI * sigma).powi(2) * 2.0 * tau * tau * bracket
}

/// T2_Hahn obtained by fitting the stretched-exponential model to the exact
/// OU echo decay.
pub fn fitted_hahn_time(sigma: f64, tau: f64) -> f64 {
    if sigma <= 0.0 {
        return f64::INFINITY;
    }
    let chi = |t: f64| 0.5 * echo_phase_variance(sigma, tau, t);
    // time at which the decay reaches 1/e
    let (mut lo, mut hi) = (0.0, tau);
    while chi(hi) < 1.0 {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if chi(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t_e = 0.5 * (lo + hi);
    let t: Vec<f64> = (0..40).map(|i| 2.5 * t_e * i as f64 / 39.0).collect();
    let y: Vec<f64> = t.iter().map(|&ti| (-chi(ti)).exp()).collect();
    match fit_decay(&t, &y, DecayModel::StretchedHahn) {
        Ok(fit) if fit.converged => fit.value("T"),
        _ => t_e,
    }
}

/// OU deviation that yields a fitted echo time of `t2_hahn` at correlation
/// time `tau`.
pub fn calibrate_ou_sigma(t2_hahn: f64, tau: f64) -> f64 {
    // T2 falls monotonically with sigma; bisect in log space.
    let (mut lo, mut hi) = (1e-3_f64.ln(), 1e9_f64.ln());
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if fitted_hahn_time(mid.exp(), tau) > t2_hahn {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(sigma: f64, ou_sigma: f64, tau: f64) -> NoiseModel {
        let q = QubitNoise { sigma_quasistatic: sigma, ou_sigma, ou_tau: tau, t2_hahn: f64::INFINITY };
        NoiseModel { backend: Backend::Stochastic, qubits: [q.clone(), q], seed: 3, ..NoiseModel::noiseless() }
    }

    #[test]
    fn silent_model_gives_zero_traces() {
        let traces = sample_noise(&model(0.0, 0.0, 1e-3), 10, 1e-3);
        for t in traces {
            assert_eq!(t.offset(0, 0.0), 0.0);
            assert_eq!(t.integral(1, 0.0, 1e-3), 0.0);
        }
    }

    #[test]
    fn static_offset_variance_matches_sigma() {
        let sigma = 5e3;
        let n = 10_000;
        let traces = sample_noise(&model(sigma, 0.0, 1e-3), n, 0.0);
        let xs: Vec<f64> = traces.iter().map(|t| t.static_offset[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // sample variance has sd sigma^2 sqrt(2/(n-1))
        let bound = 3.0 * sigma * sigma * (2.0 / (n - 1) as f64).sqrt();
        assert!((var - sigma * sigma).abs() < bound, "{var}");
    }

    #[test]
    fn ou_autocorrelation_at_tau() {
        let (s, tau) = (1e3, 1e-3);
        let m = model(0.0, s, tau);
        let lag = m.ou_steps_per_tau as usize;
        let traces = sample_noise(&m, 4000, 2.0 * tau);
        let mut acc = 0.0;
        let mut var = 0.0;
        let mut count = 0.0;
        for t in &traces {
            for k in [0, 20, 50] {
                acc += t.ou[0][k] * t.ou[0][k + lag];
                var += t.ou[0][k] * t.ou[0][k];
                count += 1.0;
            }
        }
        let rho = acc / count;
        let want = (-1.0f64).exp() * s * s;
        assert!((rho - want).abs() < 0.05 * s * s, "{rho} vs {want}");
        assert!((var / count - s * s).abs() < 0.05 * s * s);
    }

    #[test]
    fn echo_variance_matches_quadrature() {
        let (s, tau, t) = (300.0, 1e-3, 1.5e-3);
        // brute-force double integral of the filtered OU covariance
        let n = 600;
        let h = t / n as f64;
        let sign = |x: f64| if x < t / 2.0 { 1.0 } else { -1.0 };
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let (a, b) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                acc += sign(a) * sign(b) * (-(a - b).abs() / tau).exp();
            }
        }
        let numeric = (2.0 * PI * s).powi(2) * acc * h * h;
        let exact = echo_phase_variance(s, tau, t);
        assert!((numeric / exact - 1.0).abs() < 2e-3, "{numeric} vs {exact}");
    }

    #[test]
    fn calibration_round_trips() {
        let tau = 1e-3;
        let s = calibrate_ou_sigma(1.31e-3, tau);
        assert!((fitted_hahn_time(s, tau) / 1.31e-3 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn trace_segments_tile_interval() {
        let m = model(1e3, 1e3, 1e-4);
        let tr = sample_noise(&m, 1, 1e-3).remove(0);
        let segs = tr.segments(1.5e-6, 2.3e-5);
        assert_eq!(segs.first().unwrap().0, 1.5e-6);
        assert_eq!(segs.last().unwrap().1, 2.3e-5);
        assert!(segs.windows(2).all(|w| w[0].1 == w[1].0));
        for (t0, t1) in [(1.875e-4, 3.75e-4), (0.3e-3, 0.7e-3), (0.0, 1e-3)] {
            let segs = tr.segments(t0, t1);
            assert_eq!(segs.last().unwrap().1, t1, "[{t0}, {t1}]");
            assert!(segs.iter().all(|s| s.1 > s.0));
        }
    }
}
