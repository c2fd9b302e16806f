//! Ideal gate shortcuts: calibrated rotations, virtual Z, exchange CZ and
//! coherence damping.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::dynamics::{propagate, Coupling, Pulse, SpinPair};
use super::exchange::{exchange_j, ExchangeModel};
use super::noise::NoiseTrace;
use super::state::{bit, on_qubit, Mat2, Mat4, SpinState, C64};

/// Software drive-phase reference of each qubit. A virtual `Z(θ)` shifts the
/// phase by `−θ`, so later rotations act about the rotated axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Frame {
    pub phase: [f64; 2],
}

fn wrap(phase: f64) -> f64 {
    let p = phase.rem_euclid(TAU);
    if TAU - p < 1e-12 {
        0.0
    } else {
        p
    }
}

impl Frame {
    pub fn apply_virtual_z(&self, qubit: usize, theta: f64) -> Frame {
        let mut out = *self;
        out.phase[qubit] = wrap(out.phase[qubit] - theta);
        out
    }
}

/// Rotation by `angle` about the equatorial axis `(cos φ, sin φ, 0)`.
pub fn rotation_matrix(angle: f64, axis_phase: f64) -> Mat2 {
    let (s, c) = (angle / 2.0).sin_cos();
    let i = C64::new(0.0, 1.0);
    // n·σ with σy = [[0, i], [-i, 0]] in (↓, ↑) order
    let off = C64::new(axis_phase.cos(), axis_phase.sin());
    let ndots = Mat2::new(C64::new(0.0, 0.0), off, off.conj(), C64::new(0.0, 0.0));
    Mat2::identity() * C64::new(c, 0.0) - ndots * (i * s)
}

pub fn apply_rotation(state: &SpinState, qubit: usize, angle: f64, axis_phase: f64) -> SpinState {
    state.transform(&on_qubit(&rotation_matrix(angle, axis_phase), qubit))
}

/// Calibrated `X(angle)` in the qubit's current frame. Negative angles give
/// `−X` rotations.
pub fn apply_x_rotation(state: &SpinState, qubit: usize, angle: f64, frame: &Frame) -> SpinState {
    apply_rotation(state, qubit, angle, frame.phase[qubit])
}

/// Multiplies the coherences of `qubit` by `factor`.
pub fn dephase(state: &SpinState, qubit: usize, factor: f64) -> SpinState {
    if factor == 1.0 {
        return state.clone();
    }
    state.map_matrix(|m| {
        Mat4::from_fn(|i, j| if bit(i, qubit) != bit(j, qubit) { m[(i, j)] * factor } else { m[(i, j)] })
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CzOutcome {
    pub state: SpinState,
    /// Exchange used (Hz).
    pub j: f64,
    /// False when `J > 0.1·|Δf_L|`, where the secular approximation fails.
    pub valid: bool,
    pub saturated: bool,
}

/// Ratio `J/|Δf_L|` above which the adiabatic CZ is flagged invalid.
pub const CZ_VALIDITY_RATIO: f64 = 0.1;

/// Exchange pulse at barrier voltage `vj` and detuning `eps` for `duration`.
/// Antiparallel states gain phase `π J t` relative to parallel ones.
pub fn apply_cz(
    state: &SpinState,
    pair: &SpinPair,
    model: &ExchangeModel,
    vj: f64,
    eps: f64,
    duration: f64,
) -> CzOutcome {
    let j = exchange_j(model, vj, eps);
    let valid = j.hz <= CZ_VALIDITY_RATIO * pair.zeeman_difference().abs();
    let out = propagate(
        state,
        pair,
        &Pulse::exchange(j.hz, Coupling::Secular),
        duration,
        &Frame::default(),
        &NoiseTrace::silent(),
        0.0,
    );
    CzOutcome { state: out, j: j.hz, valid, saturated: j.saturated }
}

/// Conditional phase `φ↑↑ + φ↓↓ − φ↑↓ − φ↓↑` of a diagonal unitary.
pub fn conditional_phase(u: &Mat4) -> f64 {
    let a = |i: usize| u[(i, i)].arg();
    let p = a(3) + a(0) - a(1) - a(2);
    (p + PI).rem_euclid(TAU) - PI
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &SpinState, b: &SpinState) -> bool {
        (a.matrix() - b.matrix()).norm() < 1e-12
    }

    #[test]
    fn x_pi_flips_left_qubit() {
        let out = apply_x_rotation(&SpinState::ground(), 0, PI, &Frame::default());
        assert!((out.populations()[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn half_pi_composition_and_inverse() {
        let f = Frame::default();
        let s = SpinState::ground();
        let twice = apply_x_rotation(&apply_x_rotation(&s, 1, PI / 2.0, &f), 1, PI / 2.0, &f);
        assert!(close(&twice, &apply_x_rotation(&s, 1, PI, &f)));
        let back = apply_x_rotation(&apply_x_rotation(&s, 1, PI / 2.0, &f), 1, -PI / 2.0, &f);
        assert!(close(&back, &s));
    }

    #[test]
    fn virtual_z_full_turn_and_additivity() {
        let f = Frame::default().apply_virtual_z(0, 0.3);
        assert_eq!(f.apply_virtual_z(0, TAU), f);
        let a = f.apply_virtual_z(0, 0.4).apply_virtual_z(0, 0.5);
        let b = f.apply_virtual_z(0, 0.9);
        assert!((a.phase[0] - b.phase[0]).abs() < 1e-12);
    }

    #[test]
    fn z_x_z_equals_y() {
        // Z(π/2) X(π/2) Z(−π/2): the X acts after Z(−π/2) is applied.
        let s = SpinState::ground();
        let f = Frame::default().apply_virtual_z(0, -PI / 2.0);
        let via_frame = apply_x_rotation(&s, 0, PI / 2.0, &f);
        let y = apply_rotation(&s, 0, PI / 2.0, PI / 2.0);
        assert!(close(&via_frame, &y));
        // Y(π/2) takes −z to −x
        let b = y.bloch(0);
        assert!((b[0] + 1.0).abs() < 1e-12 && b[2].abs() < 1e-12);
    }

    #[test]
    fn dephase_scales_coherence_only() {
        let s = apply_x_rotation(&SpinState::ground(), 0, PI / 2.0, &Frame::default());
        let d = dephase(&s, 0, 0.5);
        let (b0, b1) = (s.bloch(0), d.bloch(0));
        assert!((b1[1] - 0.5 * b0[1]).abs() < 1e-12);
        assert_eq!(s.populations(), d.populations());
    }

    #[test]
    fn cz_validity_flag() {
        let pair = SpinPair { larmor: [14.0e9, 13.99e9], rabi: [2e5, 2e5] };
        let m = ExchangeModel::default();
        assert!(apply_cz(&SpinState::ground(), &pair, &m, m.v0, 0.0, 1e-6).valid);
        let vj = m.barrier_for(2e6, 0.0);
        assert!(!apply_cz(&SpinState::ground(), &pair, &m, vj, 0.0, 1e-6).valid);
    }
}
