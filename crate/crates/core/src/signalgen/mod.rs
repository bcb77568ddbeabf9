//! Bi-phasic pulse-train synthesis for the eight stimulation categories.
//!
//! A [`PatternSpec`] names a category and an amplitude; it resolves into a
//! [`Waveform`] (frequency and amplitude [`Envelope`]s plus pulse geometry),
//! which [`render`] places onto a uniform sampling grid. Pulses are scheduled
//! at integer crossings of the running phase `∫ f dt`, starting at `t = 0`,
//! and each pulse carries the amplitude envelope value at its onset.

mod category;
mod envelope;
mod pattern;
mod synth;

use thiserror::Error;

pub use category::{Category, FrequencyBand};
pub use envelope::{Envelope, RampTiming};
pub use pattern::{
    AmplitudeLadder, LevelIndex, PatternSpec, Polarity, PulseShape, Waveform, AMP_MODULATION_DEPTH_MA,
    DEFAULT_SAMPLE_RATE_HZ, MAX_AMPLITUDE_MA, MIN_SAMPLE_RATE_HZ, PULSE_WIDTH_RANGE_US,
};
pub use synth::{pulse_onsets, render, synthesize, CurrentSignal, PreviewPoint, PulseEvent};

/// Convenience: the standard 26-level ladder.
pub fn amplitude_ladder<T: crate::Scalar>() -> AmplitudeLadder<T> {
    AmplitudeLadder::standard()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("amplitude {amplitude_ma} mA outside (0, 3.0] mA")]
    SafetyViolation { amplitude_ma: f64 },
    #[error("pulse at {onset_s} s overlaps the previous pulse (active width {active_width_us} us)")]
    OverlappingPulses { onset_s: f64, active_width_us: u32 },
    #[error("t = {t} s outside envelope domain [0, {duration}]")]
    OutOfDomain { t: f64, duration: f64 },
    #[error("invalid envelope: {0}")]
    InvalidEnvelope(String),
    #[error("pulse width {0} us outside [5, 1000] us")]
    InvalidPulseWidth(u32),
    #[error("sample rate {0} Hz below the 100 kHz minimum")]
    SampleRateTooLow(u32),
    #[error("invalid amplitude ladder: {0}")]
    InvalidLadder(String),
    #[error("level {level} out of range for a ladder of {len}")]
    LevelOutOfRange { level: usize, len: usize },
    #[error("unknown stimulation category `{0}`")]
    UnknownCategory(String),
}
