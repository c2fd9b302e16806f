use serde::{Deserialize, Serialize};

/// Exponential exchange turn-on with barrier voltage and detuning:
/// `J = j0 · 10^(slope·(vj − v0)) · exp(eps / eps_scale)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeModel {
    /// Exchange at the reference point (Hz).
    pub j0: f64,
    /// Reference barrier voltage (V).
    pub v0: f64,
    /// Turn-on slope (decades per volt).
    pub slope: f64,
    /// Detuning enhancement scale (V).
    pub eps_scale: f64,
    /// Saturation ceiling (Hz).
    pub j_max: f64,
}

impl Default for ExchangeModel {
    fn default() -> Self {
        Self { j0: 100e3, v0: 0.90, slope: 33.69, eps_scale: 0.020, j_max: 1e9 }
    }
}

impl ExchangeModel {
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.slope > 0.0) {
            out.push("exchange slope must be > 0".to_owned());
        }
        if !(self.j0 > 0.0) {
            out.push("exchange j0 must be > 0".to_owned());
        }
        if !(self.eps_scale > 0.0) {
            out.push("exchange eps_scale must be > 0".to_owned());
        }
        if !(self.j_max > self.j0) {
            out.push("exchange j_max must exceed j0".to_owned());
        }
        out
    }

    /// Barrier voltage giving exchange `j` at `eps`.
    pub fn barrier_for(&self, j: f64, eps: f64) -> f64 {
        self.v0 + ((j / self.j0).log10() - eps / (self.eps_scale * std::f64::consts::LN_10)) / self.slope
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExchangeValue {
    pub hz: f64,
    /// Set when the model exceeded `j_max` and was clamped.
    pub saturated: bool,
}

pub fn exchange_j(m: &ExchangeModel, vj: f64, eps: f64) -> ExchangeValue {
    let log10_j = m.j0.log10() + m.slope * (vj - m.v0) + eps / (m.eps_scale * std::f64::consts::LN_10);
    let hz = 10f64.powf(log10_j);
    if !hz.is_finite() || hz > m.j_max {
        ExchangeValue { hz: m.j_max, saturated: true }
    } else {
        ExchangeValue { hz, saturated: false }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_point_and_slope() {
        let m = ExchangeModel::default();
        assert_eq!(exchange_j(&m, m.v0, 0.0).hz, m.j0);
        let j = exchange_j(&m, m.v0 + 0.1, 0.0).hz;
        assert!((j / (m.j0 * 10f64.powf(3.369)) - 1.0).abs() < 1e-12);
        let j = exchange_j(&m, m.v0, m.eps_scale).hz;
        assert!((j / (m.j0 * std::f64::consts::E) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn strictly_increasing_and_saturating() {
        let m = ExchangeModel::default();
        let a = exchange_j(&m, 0.90, 0.0).hz;
        let b = exchange_j(&m, 0.91, 0.0).hz;
        let c = exchange_j(&m, 0.90, 0.001).hz;
        assert!(b > a && c > a);
        let big = exchange_j(&m, 10.0, 0.0);
        assert!(big.saturated);
        assert_eq!(big.hz, m.j_max);
    }

    #[test]
    fn barrier_for_inverts_model() {
        let m = ExchangeModel::default();
        let v = m.barrier_for(1e6, 0.003);
        assert!((exchange_j(&m, v, 0.003).hz - 1e6).abs() < 1e-6);
    }
}
