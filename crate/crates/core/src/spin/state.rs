use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat4 = Matrix4<C64>;
pub type Mat2 = Matrix2<C64>;

pub(crate) const TRACE_TOL: f64 = 1e-9;
pub(crate) const HERMITIAN_TOL: f64 = 1e-12;
pub(crate) const PSD_TOL: f64 = 1e-9;

/// Index of the spin of `qubit` (0 = left) inside basis index `i`.
pub(crate) fn bit(i: usize, qubit: usize) -> usize {
    (i >> (1 - qubit)) & 1
}

/// Density matrix of one double dot.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinState {
    rho: Mat4,
}

impl SpinState {
    /// `|↓↓⟩⟨↓↓|`.
    pub fn ground() -> Self {
        Self::basis(0)
    }

    /// Computational basis state, index `2*b_left + b_right` with `1 = ↑`.
    pub fn basis(index: usize) -> Self {
        let mut rho = Mat4::zeros();
        rho[(index, index)] = C64::new(1.0, 0.0);
        Self { rho }
    }

    pub fn from_spins(left_up: bool, right_up: bool) -> Self {
        Self::basis(2 * left_up as usize + right_up as usize)
    }

    /// Normalised pure state.
    pub fn pure(amplitudes: [C64; 4]) -> Result<Self> {
        let v = Vector4::from(amplitudes);
        let norm = v.norm();
        if !(norm > 0.0) {
            return Err(Error::State("zero state vector".into()));
        }
        let v = v / C64::new(norm, 0.0);
        Ok(Self { rho: v * v.adjoint() })
    }

    /// Classical mixture of basis states with the given weights.
    pub fn diagonal(weights: [f64; 4]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w < 0.0) || !(total > 0.0) {
            return Err(Error::State("mixture weights must be non-negative".into()));
        }
        let mut rho = Mat4::zeros();
        for (i, w) in weights.iter().enumerate() {
            rho[(i, i)] = C64::new(w / total, 0.0);
        }
        Ok(Self { rho })
    }

    /// Wraps a matrix after checking trace, Hermiticity and positivity.
    pub fn from_matrix(rho: Mat4) -> Result<Self> {
        let s = Self { rho };
        s.validate()?;
        Ok(s)
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.rho
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    pub fn purity(&self) -> f64 {
        (self.rho * self.rho).trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        (self.rho - self.rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (self.rho + self.rho.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::State(format!("trace {tr} differs from 1")));
        }
        let herm = self.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(Error::State(format!("not Hermitian (max deviation {herm:e})")));
        }
        let min = self.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::State(format!("not positive semidefinite (eigenvalue {min:e})")));
        }
        Ok(())
    }

    /// Diagonal of ρ in basis order.
    pub fn populations(&self) -> [f64; 4] {
        std::array::from_fn(|i| self.rho[(i, i)].re)
    }

    /// Probability that `qubit` is up.
    pub fn up_probability(&self, qubit: usize) -> f64 {
        (0..4).filter(|&i| bit(i, qubit) == 1).map(|i| self.rho[(i, i)].re).sum()
    }

    /// Reduced 2×2 density matrix of `qubit`, ordered `(↓, ↑)`.
    pub fn reduced(&self, qubit: usize) -> Mat2 {
        let mut r = Mat2::zeros();
        for i in 0..4 {
            for j in 0..4 {
                if bit(i, 1 - qubit) == bit(j, 1 - qubit) {
                    r[(bit(i, qubit), bit(j, qubit))] += self.rho[(i, j)];
                }
            }
        }
        r
    }

    /// Bloch vector `(⟨σx⟩, ⟨σy⟩, ⟨σz⟩)` of `qubit` with `↑` at `+z`.
    pub fn bloch(&self, qubit: usize) -> [f64; 3] {
        let r = self.reduced(qubit);
        // ⟨σx⟩ = 2 Re ρ_{↓↑}, ⟨σy⟩ = 2 Im ρ_{↓↑}.
        let c = r[(0, 1)];
        [2.0 * c.re, 2.0 * c.im, (r[(1, 1)] - r[(0, 0)]).re]
    }

    /// `ρ → U ρ U†`, re-symmetrised.
    pub fn transform(&self, u: &Mat4) -> Self {
        let rho = u * self.rho * u.adjoint();
        Self { rho: (rho + rho.adjoint()) * C64::new(0.5, 0.0) }
    }

    pub(crate) fn map_matrix(&self, f: impl FnOnce(&Mat4) -> Mat4) -> Self {
        Self { rho: f(&self.rho) }
    }
}

/// `a ⊗ b` with `a` acting on the left qubit.
pub(crate) fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
    Mat4::from_fn(|i, j| a[(i >> 1, j >> 1)] * b[(i & 1, j & 1)])
}

pub(crate) fn on_qubit(op: &Mat2, qubit: usize) -> Mat4 {
    if qubit == 0 {
        kron(op, &Mat2::identity())
    } else {
        kron(&Mat2::identity(), op)
    }
}

/// Spin-½ operators in `(↓, ↑)` order.
pub(crate) mod ops {
    use super::{Mat2, C64};

    pub fn sx() -> Mat2 {
        Mat2::new(C64::new(0.0, 0.0), C64::new(0.5, 0.0), C64::new(0.5, 0.0), C64::new(0.0, 0.0))
    }

    pub fn sy() -> Mat2 {
        Mat2::new(C64::new(0.0, 0.0), C64::new(0.0, 0.5), C64::new(0.0, -0.5), C64::new(0.0, 0.0))
    }

    pub fn sz() -> Mat2 {
        Mat2::new(C64::new(-0.5, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.5, 0.0))
    }
}
