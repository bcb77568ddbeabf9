//! Electrotactile stimulation toolkit.
//!
//! - [`signalgen`]: ramp-and-hold pulse-train synthesis for eight categories
//! - [`energy`]: signal energy `∫ I(t)² dt`, numeric and event-list forms
//! - [`calibrate`]: preferred-intensity prediction from one calibrated reference
//! - [`device`]: virtual stimulator (frame codec, switch matrix, DAC table)
//! - [`study`]: calibration/evaluation session protocol and statistics
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar to `f64`, which is what the CLI and service
//! use.

// Validation uses `!(x > 0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod device;
pub mod energy;
pub mod scalar;
pub mod signalgen;
pub mod study;

pub use scalar::Scalar;
pub use signalgen::{Category, LevelIndex};

pub type Envelope = signalgen::Envelope<f64>;
pub type PatternSpec = signalgen::PatternSpec<f64>;
pub type Waveform = signalgen::Waveform<f64>;
pub type AmplitudeLadder = signalgen::AmplitudeLadder<f64>;
pub type CurrentSignal = signalgen::CurrentSignal<f64>;
pub type EnergyValue = energy::EnergyValue<f64>;
pub type EnergyProfile = energy::EnergyProfile<f64>;
pub type ProfileSet = energy::ProfileSet<f64>;
pub type CalibrationPoint = calibrate::CalibrationPoint<f64>;
pub type PredictionResult = calibrate::PredictionResult<f64>;
pub type ScoreMatrix = calibrate::ScoreMatrix<f64>;
