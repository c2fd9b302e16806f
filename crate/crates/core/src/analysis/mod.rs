//! Least-squares fits, regression, histogram thresholds and tomography.

mod fit;
mod lm;
mod stats;

use serde::{Deserialize, Serialize};

pub use fit::{fit_chevron, fit_decay, fit_turnon, linear_fit, rabi_probability, LinearFit};
pub use stats::{
    bloch_vector, debiased_length, optimal_threshold, unwrap_phases, BlochEstimate, Counts, ProjectionCounts, Threshold,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    /// `A exp(-(t/T)^2) + c`.
    GaussianRamsey,
    /// `A exp(-(t/T)^n) + c` with free `n ≥ 1`.
    StretchedHahn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    GaussianRamsey,
    StretchedHahn,
    Chevron,
    TurnOn,
}

impl From<DecayModel> for FitModel {
    fn from(m: DecayModel) -> Self {
        match m {
            DecayModel::GaussianRamsey => FitModel::GaussianRamsey,
            DecayModel::StretchedHahn => FitModel::StretchedHahn,
        }
    }
}

/// Parameter estimates with 1σ uncertainties. When `converged` is false the
/// estimates must not be used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Estimate of `name`, NaN if the model has no such parameter.
    pub fn value(&self, name: &str) -> f64 {
        self.index(name).map_or(f64::NAN, |i| self.values[i])
    }

    pub fn sigma(&self, name: &str) -> f64 {
        self.index(name).map_or(f64::NAN, |i| self.sigmas[i])
    }
}
