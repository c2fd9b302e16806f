//! Declarative run configuration: device, lab settings and named
//! experiments, stored as TOML.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::device::{DeviceConfig, ExclusionWindow, PAIRS};
use crate::error::{Error, Result};
use crate::experiments::{ExperimentKind, ExperimentSpec};
use crate::readout::{HeraldConfig, SensorModel};
use crate::spin::{exchange_j, larmor_frequency, Backend, ExchangeModel, FieldConfig, CZ_VALIDITY_RATIO};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSettings {
    /// OU correlation time (s).
    pub ou_tau: f64,
    pub ou_steps_per_tau: f64,
    pub envelope_exponent_ramsey: f64,
    pub envelope_exponent_hahn: f64,
    /// Enables the OU drift of the stochastic backend.
    pub drift: bool,
}

impl Default for NoiseSettings {
    fn default() -> Self {
        Self {
            ou_tau: 1e-3,
            ou_steps_per_tau: 100.0,
            envelope_exponent_ramsey: 2.0,
            envelope_exponent_hahn: 2.0,
            drift: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub field: FieldConfig,
    pub exchange: ExchangeModel,
    pub sensor: SensorModel,
    pub herald: HeraldConfig,
    pub noise: NoiseSettings,
    pub device: DeviceConfig,
    pub experiments: BTreeMap<String, ExperimentSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.chars().count(), |i| before[i + 1..].chars().count()) + 1;
    (line, column)
}

impl Config {
    /// Parses TOML. Syntax and type errors carry a line and column; a device
    /// section that omits a gate voltage is reported by gate name.
    pub fn from_toml_str(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            Error::Parse { line, column, message: e.message().to_owned() }
        })?;
        cfg.device.operating_point.check_complete(&cfg.device)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        Config::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn experiment(&self, name: &str) -> Result<&ExperimentSpec> {
        self.experiments.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.experiments.keys().map(String::as_str).collect();
            Error::Usage(format!("unknown experiment '{name}' (known: {})", known.join(", ")))
        })
    }

    /// Default device plus the full characterization suite: a chevron,
    /// Ramsey and Hahn run per qubit, the exchange fingerprint and turn-on
    /// on the first cell, the CZ calibration and the cascade calibration.
    pub fn bundled() -> Config {
        let mut cfg = Config::default();
        let qubits: Vec<usize> = cfg.device.qubits.iter().map(|q| q.dot_index).collect();
        for (i, &q) in qubits.iter().enumerate() {
            let seed = 1000 + i as u64;
            cfg.experiments
                .insert(format!("chevron-q{q}"), ExperimentSpec::new(ExperimentKind::Chevron, q).with_seed(seed));
            cfg.experiments.insert(
                format!("ramsey-q{q}"),
                ExperimentSpec::new(ExperimentKind::RamseyPurity, q).with_seed(seed + 100),
            );
            let mut hahn = ExperimentSpec::new(ExperimentKind::Hahn, q).with_seed(seed + 200);
            hahn.backend = Backend::Analytic;
            cfg.experiments.insert(format!("hahn-q{q}"), hahn);
        }
        cfg.device.exclusions.push(ExclusionWindow {
            x_axis: "J1".into(),
            x_range: [0.90, 0.92],
            y_axis: "eps".into(),
            y_range: [0.03, 0.04],
        });
        let mut fp = ExperimentSpec::new(ExperimentKind::Fingerprint, 2).with_seed(7);
        fp.backend = Backend::Analytic;
        fp.sampling = crate::experiments::Sampling::Expectation;
        cfg.experiments.insert("fingerprint".into(), fp);
        let mut spec = ExperimentSpec::new(ExperimentKind::ExchangeSpectroscopy, 2).with_seed(8);
        spec.backend = Backend::Analytic;
        cfg.experiments.insert("exchange-spectroscopy".into(), spec);
        let mut cz = ExperimentSpec::new(ExperimentKind::CzCalibration, 2).with_seed(9);
        cz.backend = Backend::Analytic;
        cz.noise = false;
        cz.sampling = crate::experiments::Sampling::Expectation;
        cfg.experiments.insert("cz-calibration".into(), cz);
        cfg.experiments.insert(
            "cascade-calibration".into(),
            ExperimentSpec::new(ExperimentKind::CascadeCalibration, 3).with_seed(10),
        );
        cfg.experiments.insert("feedback".into(), ExperimentSpec::new(ExperimentKind::FeedbackDemo, 1).with_seed(11));
        cfg
    }

    /// Structural errors plus warnings for physically dubious settings.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let err = |m: String| Diagnostic { severity: Severity::Error, message: m };
        let warn = |m: String| Diagnostic { severity: Severity::Warning, message: m };
        let mut out: Vec<Diagnostic> = Vec::new();
        out.extend(self.device.invariant_violations().into_iter().map(err));
        for q in &self.device.qubits {
            out.extend(q.invariant_violations().into_iter().map(err));
        }
        out.extend(self.exchange.invariant_violations().into_iter().map(err));
        out.extend(self.sensor.invariant_violations().into_iter().map(err));
        if !(self.herald.probability > 0.0 && self.herald.probability <= 1.0) {
            out.push(err("herald probability must be in (0, 1]".into()));
        }
        if self.herald.retry_limit == 0 {
            out.push(err("herald retry_limit must be >= 1".into()));
        }
        if !(self.noise.ou_tau > 0.0) || !(self.noise.ou_steps_per_tau >= 1.0) {
            out.push(err("noise ou_tau must be > 0 and ou_steps_per_tau >= 1".into()));
        }
        if !(self.noise.envelope_exponent_ramsey >= 1.0 && self.noise.envelope_exponent_hahn >= 1.0) {
            out.push(err("envelope exponents must be >= 1".into()));
        }
        if !(self.field.b0 > 0.0) {
            out.push(err("field b0 must be > 0".into()));
        }
        for (name, spec) in &self.experiments {
            out.extend(spec.invariant_violations(self).into_iter().map(|m| err(format!("experiment {name}: {m}"))));
        }
        if out.iter().any(|d| d.severity == Severity::Error) {
            return out;
        }

        let zeeman = |pair: usize| -> Option<f64> {
            let (l, r) = PAIRS[pair];
            let (ql, qr) = (self.device.qubit(l)?, self.device.qubit(r)?);
            Some((larmor_frequency(ql, &self.field) - larmor_frequency(qr, &self.field)).abs())
        };
        for pair in 0..PAIRS.len() {
            let Some(dz) = zeeman(pair) else { continue };
            let barrier = self.device.pair_barrier(pair);
            let Some(vj) = self.device.operating_point.get(barrier) else { continue };
            let j = exchange_j(&self.exchange, vj, 0.0).hz;
            if j > CZ_VALIDITY_RATIO * dz {
                out.push(warn(format!(
                    "DQD {}: exchange {j:.3e} Hz at the operating point is comparable to the Zeeman difference {dz:.3e} Hz",
                    pair + 1
                )));
            }
        }
        for (name, spec) in &self.experiments {
            if spec.kind != ExperimentKind::CzCalibration {
                continue;
            }
            if let Some(dz) = zeeman((spec.qubit - 1) / 2) {
                if spec.params.cz_exchange > CZ_VALIDITY_RATIO * dz {
                    out.push(warn(format!(
                        "experiment {name}: cz_exchange {:.3e} Hz is comparable to the Zeeman difference {dz:.3e} Hz",
                        spec.params.cz_exchange
                    )));
                }
            }
        }
        out
    }

    pub fn has_errors(diagnostics: &[Diagnostic]) -> bool {
        diagnostics.iter().any(|d| d.severity == Severity::Error)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_is_clean() {
        assert_eq!(Config::bundled().validate(), Vec::new());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = Config::bundled();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(Config::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn syntax_error_has_position() {
        let err = Config::from_toml_str("[field]\nb0 = 0.5\nb1_amplitude = = 1\n").unwrap_err();
        match err {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 1);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_gate_is_named() {
        let mut cfg = Config::bundled();
        cfg.device.operating_point.0.remove("J3");
        let err = Config::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap_err();
        assert!(err.to_string().contains("missing gate J3"), "{err}");
    }

    #[test]
    fn invariant_errors() {
        let mut cfg = Config::bundled();
        cfg.device.qubits[0].t2_hahn = 1e-6;
        assert!(Config::has_errors(&cfg.validate()));
        let mut cfg = Config::bundled();
        cfg.exchange.slope = 0.0;
        assert!(Config::has_errors(&cfg.validate()));
    }

    #[test]
    fn strong_exchange_warns() {
        let mut cfg = Config::bundled();
        cfg.experiments.get_mut("cz-calibration").unwrap().params.cz_exchange = 5e6;
        let d = cfg.validate();
        assert!(!Config::has_errors(&d));
        assert!(d.iter().any(|d| d.severity == Severity::Warning));
    }
}
