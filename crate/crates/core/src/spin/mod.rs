//! Two-spin dynamics of one double dot in the rotating frame.
//!
//! Basis order is `{↓↓, ↓↑, ↑↓, ↑↑}` with the left dot as the first factor.
//! Frequencies are in Hz and the propagator of a Hamiltonian `H` (Hz) over
//! time `t` is `exp(-i 2π H t)`.

mod dynamics;
mod exchange;
mod gates;
mod noise;
mod state;

use serde::{Deserialize, Serialize};

pub use dynamics::{evolve, propagate, Coupling, Drive, Pulse, SpinPair};
pub use exchange::{exchange_j, ExchangeModel, ExchangeValue};
pub use gates::{
    apply_cz, apply_rotation, apply_x_rotation, conditional_phase, dephase, rotation_matrix, CzOutcome, Frame,
    CZ_VALIDITY_RATIO,
};
pub use noise::{
    calibrate_ou_sigma, echo_phase_variance, fitted_hahn_time, sample_noise, Backend, NoiseModel, NoiseTrace,
    QubitNoise,
};
pub use state::{SpinState, C64};

/// Bohr magneton over Planck constant, Hz/T (CODATA 2018: 13.996 245 GHz/T).
pub const MU_B_OVER_H: f64 = 13.996_245_493e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitParams {
    /// 1-based dot index (1..=8).
    pub dot_index: usize,
    pub g_factor: f64,
    /// Rabi frequency at unit drive amplitude (Hz).
    pub rabi_frequency: f64,
    /// Ramsey dephasing time (s).
    pub t2_star: f64,
    /// Hahn-echo coherence time (s).
    pub t2_hahn: f64,
}

impl QubitParams {
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let q = self.dot_index;
        if !(self.rabi_frequency > 0.0) {
            out.push(format!("qubit {q}: rabi_frequency must be > 0"));
        }
        if !(self.t2_star > 0.0) {
            out.push(format!("qubit {q}: t2_star must be > 0"));
        }
        if !(self.t2_hahn >= self.t2_star) {
            out.push(format!("qubit {q}: t2_hahn must be >= t2_star"));
        }
        if !(self.g_factor.is_finite() && self.g_factor > 0.0) {
            out.push(format!("qubit {q}: g_factor must be positive"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    /// In-plane DC field (T).
    pub b0: f64,
    /// Drive strength multiplier applied to every Rabi frequency.
    pub b1_amplitude: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self { b0: 0.5, b1_amplitude: 1.0 }
    }
}

/// Zeeman splitting `g μB B0 / h` in Hz.
pub fn larmor_frequency(q: &QubitParams, f: &FieldConfig) -> f64 {
    q.g_factor * MU_B_OVER_H * f.b0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qubit(g: f64) -> QubitParams {
        QubitParams { dot_index: 1, g_factor: g, rabi_frequency: 2e5, t2_star: 41e-6, t2_hahn: 1.31e-3 }
    }

    #[test]
    fn larmor_examples() {
        let f = FieldConfig::default();
        let fl = larmor_frequency(&qubit(2.0), &f);
        assert!((fl - 13.996e9).abs() < 1e6, "{fl}");
        assert_eq!(larmor_frequency(&qubit(2.0), &FieldConfig { b0: 0.0, b1_amplitude: 1.0 }), 0.0);
        let df = larmor_frequency(&qubit(2.0 + 2.17e-3), &f) - fl;
        // 2.17e-3 * 13.996 GHz/T * 0.5 T
        assert!((df - 15.186e6).abs() < 0.01e6, "{df}");
    }

    #[test]
    fn qubit_invariants() {
        assert!(qubit(2.0).invariant_violations().is_empty());
        let mut q = qubit(2.0);
        q.t2_hahn = 1e-6;
        assert_eq!(q.invariant_violations().len(), 1);
    }
}
