//! Desk-scale simulator of an eight-dot linear silicon spin-qubit array.
//!
//! The crate is organised along the physical pipeline of the device:
//!
//! - [`device`]: constant-interaction electrostatics, stability maps and the
//!   staged electron-loading routine.
//! - [`spin`]: two-spin rotating-frame dynamics of one double dot, noise
//!   backends and gate primitives.
//! - [`readout`]: Pauli-spin-blockade parity projection, charge sensing and
//!   cascaded readout.
//! - [`experiments`]: seeded protocols (chevron, Ramsey, Hahn, exchange,
//!   CZ calibration, cascade calibration, feedback).
//! - [`analysis`]: least-squares fits, thresholds and tomography.
//! - [`config`] and [`export`]: the declarative config file and the CSV/JSON
//!   artifacts written by the command-line runner.

pub mod analysis;
pub mod config;
pub mod device;
pub mod error;
pub mod experiments;
pub mod export;
pub mod readout;
pub mod rng;
pub mod spin;

pub use config::{Config, Diagnostic, Severity};
pub use device::{ChargeConfiguration, DetuningAxis, DeviceConfig, GateVoltages, LoadingStage};
pub use error::{Error, Result};
pub use experiments::{ExperimentKind, ExperimentOutput, ExperimentSpec, ShotRecord};
pub use readout::{Parity, ReadoutMode, ReadoutOutcome, SensorModel};
pub use spin::{Backend, ExchangeModel, FieldConfig, Frame, NoiseModel, Pulse, QubitParams, SpinState};
