//! Piecewise-constant propagation of the two-spin density matrix.
//!
//! During a pulse both spins are described in one frame rotating at the
//! drive frequency (or the mean Larmor frequency when undriven):
//!
//! `H = Σ_k Δ_k Sz_k + Σ_k fR_k (cos φ_k Sx_k + sin φ_k Sy_k) + J (S1·S2 − 1/4)`
//!
//! with `Δ_k` the spin frequency minus the frame frequency plus the sampled
//! noise offset. After the pulse the nominal part of `Δ_k` is rotated away so
//! the stored state always lives in each qubit's own reference frame. The
//! drive phase is referenced to the start of each pulse.

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use super::gates::{dephase, Frame};
use super::noise::{Backend, NoiseModel, NoiseTrace};
use super::state::{bit, kron, on_qubit, ops, Mat2, Mat4, SpinState, C64};
use super::{larmor_frequency, FieldConfig, QubitParams};
use crate::error::{Error, Result};
use crate::rng::{self, purpose};

use std::f64::consts::PI;

/// Nominal frequencies of the two spins of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinPair {
    /// Larmor frequencies (Hz).
    pub larmor: [f64; 2],
    /// Rabi frequencies at unit drive amplitude (Hz).
    pub rabi: [f64; 2],
}

impl SpinPair {
    pub fn new(left: &QubitParams, right: &QubitParams, field: &FieldConfig) -> Self {
        Self {
            larmor: [larmor_frequency(left, field), larmor_frequency(right, field)],
            rabi: [left.rabi_frequency * field.b1_amplitude, right.rabi_frequency * field.b1_amplitude],
        }
    }

    /// `f_L,left − f_L,right`.
    pub fn zeeman_difference(&self) -> f64 {
        self.larmor[0] - self.larmor[1]
    }
}

/// ESR drive addressed to one qubit. The same field reaches the other spin
/// of the cell at its own detuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drive {
    pub target: usize,
    /// Drive frequency minus the target's Larmor frequency (Hz).
    pub offset: f64,
    /// Drive phase (rad) relative to the qubit frames.
    pub phase: f64,
    /// Multiplier on the Rabi frequencies.
    pub amplitude: f64,
}

impl Drive {
    pub fn resonant(target: usize) -> Self {
        Self { target, offset: 0.0, phase: 0.0, amplitude: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// Full Heisenberg exchange including the flip-flop term.
    #[default]
    Full,
    /// Ising part only, valid for adiabatic pulses with `J ≪ ΔE_z`.
    Secular,
}

/// Hamiltonian specification of one constant-control segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Pulse {
    pub drive: Option<Drive>,
    /// Exchange (Hz).
    pub exchange: f64,
    pub coupling: Coupling,
}

impl Pulse {
    pub fn idle() -> Self {
        Self::default()
    }

    pub fn drive(drive: Drive) -> Self {
        Self { drive: Some(drive), ..Self::default() }
    }

    pub fn exchange(j: f64, coupling: Coupling) -> Self {
        Self { drive: None, exchange: j, coupling }
    }
}

fn su2(delta: f64, rabi: f64, phase: f64, dt: f64) -> Mat2 {
    // exp(-i 2π dt (Δ Sz + fR (cos φ Sx + sin φ Sy)))
    let omega = (delta * delta + rabi * rabi).sqrt();
    if omega == 0.0 || dt == 0.0 {
        return Mat2::identity();
    }
    let angle = PI * omega * dt;
    let (s, c) = angle.sin_cos();
    let (nx, ny, nz) = (rabi * phase.cos() / omega, rabi * phase.sin() / omega, delta / omega);
    // n·σ in (↓, ↑) order: σz = diag(-1, 1), σx, σy = [[0, i], [-i, 0]]
    let i = C64::new(0.0, 1.0);
    let ndots =
        Mat2::new(C64::new(-nz, 0.0), C64::new(nx, 0.0) + i * ny, C64::new(nx, 0.0) - i * ny, C64::new(nz, 0.0));
    Mat2::identity() * C64::new(c, 0.0) - ndots * (i * s)
}

fn spin_z(i: usize, qubit: usize) -> f64 {
    if bit(i, qubit) == 1 {
        0.5
    } else {
        -0.5
    }
}

fn hamiltonian(delta: [f64; 2], rabi: [f64; 2], phase: [f64; 2], j: f64, coupling: Coupling) -> Mat4 {
    let mut h = Mat4::zeros();
    for k in 0..2 {
        let single = ops::sz() * C64::new(delta[k], 0.0)
            + (ops::sx() * C64::new(phase[k].cos(), 0.0) + ops::sy() * C64::new(phase[k].sin(), 0.0))
                * C64::new(rabi[k], 0.0);
        h += on_qubit(&single, k);
    }
    if j != 0.0 {
        let zz = kron(&ops::sz(), &ops::sz());
        let ss = match coupling {
            Coupling::Full => zz + kron(&ops::sx(), &ops::sx()) + kron(&ops::sy(), &ops::sy()),
            Coupling::Secular => zz,
        };
        h += (ss - Mat4::identity() * C64::new(0.25, 0.0)) * C64::new(j, 0.0);
    }
    h
}

fn segment_unitary(delta: [f64; 2], rabi: [f64; 2], phase: [f64; 2], j: f64, coupling: Coupling, dt: f64) -> Mat4 {
    if j == 0.0 {
        return kron(&su2(delta[0], rabi[0], phase[0], dt), &su2(delta[1], rabi[1], phase[1], dt));
    }
    if rabi == [0.0, 0.0] && coupling == Coupling::Secular {
        let d = Vector4::from_fn(|i, _| {
            let e = delta[0] * spin_z(i, 0) + delta[1] * spin_z(i, 1) + j * (spin_z(i, 0) * spin_z(i, 1) - 0.25);
            C64::from_polar(1.0, -2.0 * PI * e * dt)
        });
        return Mat4::from_diagonal(&d);
    }
    let h = hamiltonian(delta, rabi, phase, j, coupling);
    let eig = h.symmetric_eigen();
    let phases = eig.eigenvalues.map(|l| C64::from_polar(1.0, -2.0 * PI * l * dt));
    &eig.eigenvectors * Mat4::from_diagonal(&phases) * eig.eigenvectors.adjoint()
}

/// Propagates `state` through `pulse` for `duration` seconds starting at
/// shot time `t0`, using the frequency offsets in `trace`.
pub fn propagate(
    state: &SpinState,
    pair: &SpinPair,
    pulse: &Pulse,
    duration: f64,
    frame: &Frame,
    trace: &NoiseTrace,
    t0: f64,
) -> SpinState {
    if duration <= 0.0 {
        return state.clone();
    }
    let (frame_freq, rabi, phase) = match pulse.drive {
        Some(d) => (
            pair.larmor[d.target] + d.offset,
            [pair.rabi[0] * d.amplitude, pair.rabi[1] * d.amplitude],
            [d.phase + frame.phase[0], d.phase + frame.phase[1]],
        ),
        None => (0.5 * (pair.larmor[0] + pair.larmor[1]), [0.0; 2], [0.0; 2]),
    };
    let nominal = [pair.larmor[0] - frame_freq, pair.larmor[1] - frame_freq];
    let mut u = Mat4::identity();
    for (a, b) in trace.segments(t0, t0 + duration) {
        let mid = 0.5 * (a + b);
        let delta = [nominal[0] + trace.offset(0, mid), nominal[1] + trace.offset(1, mid)];
        u = segment_unitary(delta, rabi, phase, pulse.exchange, pulse.coupling, b - a) * u;
    }
    let back = Vector4::from_fn(|i, _| {
        let e = nominal[0] * spin_z(i, 0) + nominal[1] * spin_z(i, 1);
        C64::from_polar(1.0, 2.0 * PI * e * duration)
    });
    state.transform(&(Mat4::from_diagonal(&back) * u))
}

/// Evolves `state` under `pulse` for `duration` with one noise realisation
/// drawn from `seed` (stochastic backend), or noiselessly with the Ramsey
/// envelope applied to drive-free evolution (analytic backend).
pub fn evolve(
    state: &SpinState,
    pair: &SpinPair,
    pulse: &Pulse,
    duration: f64,
    noise: &NoiseModel,
    seed: u64,
) -> Result<SpinState> {
    if !(duration >= 0.0) {
        return Err(Error::Usage(format!("negative duration {duration}")));
    }
    state.validate()?;
    let frame = Frame::default();
    match noise.backend {
        Backend::Stochastic => {
            let mut rng = rng::stream(seed, &[purpose::SPIN]);
            let trace = NoiseTrace::sample(noise, &mut rng, duration);
            Ok(propagate(state, pair, pulse, duration, &frame, &trace, 0.0))
        }
        Backend::Analytic => {
            let mut out = propagate(state, pair, pulse, duration, &frame, &NoiseTrace::silent(), 0.0);
            if pulse.drive.is_none() {
                for q in 0..2 {
                    out = dephase(&out, q, noise.ramsey_envelope(q, duration));
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::noise::QubitNoise;

    fn pair() -> SpinPair {
        SpinPair { larmor: [13.99e9, 13.98e9], rabi: [200e3, 200e3] }
    }

    fn quiet() -> NoiseModel {
        NoiseModel { backend: Backend::Stochastic, ..NoiseModel::noiseless() }
    }

    #[test]
    fn zero_duration_is_identity() {
        let s = SpinState::ground();
        let out = evolve(&s, &pair(), &Pulse::drive(Drive::resonant(0)), 0.0, &quiet(), 1).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn resonant_pi_pulse_flips_target() {
        let out =
            evolve(&SpinState::ground(), &pair(), &Pulse::drive(Drive::resonant(0)), 2.5e-6, &quiet(), 1).unwrap();
        assert!((out.populations()[2] - 1.0).abs() < 1e-4, "{:?}", out.populations());
    }

    #[test]
    fn detuned_drive_peaks_at_half() {
        // Δ = fR: maximum excited population fR²/(fR²+Δ²) = 1/2 at t = 1/(2Ω)
        let fr = 200e3;
        let d = Drive { offset: fr, ..Drive::resonant(0) };
        let omega = (2.0f64).sqrt() * fr;
        let p = SpinPair { larmor: [13.99e9, 13.0e9], rabi: [fr, fr] };
        let out = evolve(&SpinState::ground(), &p, &Pulse::drive(d), 1.0 / (2.0 * omega), &quiet(), 1).unwrap();
        assert!((out.up_probability(0) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn general_path_matches_separable_path() {
        let s =
            SpinState::pure([C64::new(0.6, 0.0), C64::new(0.0, 0.3), C64::new(0.5, 0.1), C64::new(0.2, 0.0)]).unwrap();
        let delta = [3e4, -2e4];
        let a = segment_unitary(delta, [1e5, 1e5], [0.3, 0.3], 0.0, Coupling::Full, 3e-6);
        let h = hamiltonian(delta, [1e5, 1e5], [0.3, 0.3], 0.0, Coupling::Full);
        let eig = h.symmetric_eigen();
        let b = &eig.eigenvectors
            * Mat4::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, -2.0 * PI * l * 3e-6)))
            * eig.eigenvectors.adjoint();
        assert!((a - b).norm() < 1e-10);
        assert!((s.transform(&a).purity() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn analytic_backend_applies_ramsey_envelope_to_free_evolution() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let plus =
            SpinState::pure([C64::new(h, 0.0), C64::new(0.0, 0.0), C64::new(h, 0.0), C64::new(0.0, 0.0)]).unwrap();
        let mut noise = NoiseModel::noiseless();
        noise.qubits[0] =
            QubitNoise { sigma_quasistatic: crate::spin::noise::sigma_for_t2_star(41e-6), ..QubitNoise::quiet() };
        let out = evolve(&plus, &pair(), &Pulse::idle(), 41e-6, &noise, 0).unwrap();
        let b = out.bloch(0);
        assert!(((b[0] * b[0] + b[1] * b[1]).sqrt() - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn non_psd_input_is_rejected() {
        let mut m = Mat4::zeros();
        m[(0, 0)] = C64::new(1.2, 0.0);
        m[(1, 1)] = C64::new(-0.2, 0.0);
        let bad = SpinState::ground().map_matrix(|_| m);
        assert!(matches!(evolve(&bad, &pair(), &Pulse::idle(), 1e-6, &quiet(), 0), Err(Error::State(_))));
    }

    #[test]
    fn full_exchange_swaps_antiparallel_when_degenerate() {
        // Equal Zeeman energies: J drives |↑↓⟩ → |↓↑⟩ in t = 1/(2J).
        let p = SpinPair { larmor: [14e9, 14e9], rabi: [0.0, 0.0] };
        let j = 1e6;
        let out = propagate(
            &SpinState::from_spins(true, false),
            &p,
            &Pulse::exchange(j, Coupling::Full),
            0.5 / j,
            &Frame::default(),
            &NoiseTrace::silent(),
            0.0,
        );
        assert!((out.populations()[1] - 1.0).abs() < 1e-9);
    }
}
