//! Virtual electrotactile stimulator.
//!
//! The device accepts binary [`codec`] frames, keeps a 15-channel switch
//! matrix, converts DAC codes to current through a [`DacLut`] and plays
//! stimulations back as sampled [`CurrentSignal`]s. An emergency-stop flag
//! may be raised from another thread; it is honoured between pulses so the
//! output stays charge balanced.

mod channels;
pub mod codec;
mod lut;

use std::io::BufRead;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

pub use channels::{ChannelConfig, ChannelState, CHANNEL_COUNT};
pub use codec::{decode, encode, Command, Opcode, StimCommand, WaveformMode, FRAME_LEN};
pub use lut::{can_realize, DacLut, Realization, DAC_MAX_CODE};

use crate::scalar::Scalar;
use crate::signalgen::{render, CurrentSignal, Envelope, PulseShape, RampTiming, SignalError, Waveform, MAX_AMPLITUDE_MA};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("invalid `{field}`: {reason}")]
    Validation { field: &'static str, reason: String },
    #[error("frame length {got}, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("bad magic {0:#06x}")]
    BadMagic(u16),
    #[error("unsupported frame version {0}")]
    UnsupportedVersion(u8),
    #[error("checksum mismatch: stored {stored:#06x}, computed {computed:#06x}")]
    Checksum { stored: u16, computed: u16 },
    #[error("unknown opcode {0:#04x}")]
    UnknownOpcode(u8),
    #[error("channel configuration needs at least one source and one sink")]
    NoCurrentPath,
    #[error("invalid DAC table: {0}")]
    InvalidLut(String),
    #[error("malformed hex frame: {0}")]
    Hex(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Polled before every pulse with the pulse's onset time (s).
pub trait StopSignal {
    fn should_stop(&self, t_s: f64) -> bool;
}

impl StopSignal for AtomicBool {
    fn should_stop(&self, _t_s: f64) -> bool {
        self.load(Ordering::Acquire)
    }
}

impl<S: StopSignal + ?Sized> StopSignal for Arc<S> {
    fn should_stop(&self, t_s: f64) -> bool {
        (**self).should_stop(t_s)
    }
}

/// Never stops.
pub struct NoStop;

impl StopSignal for NoStop {
    fn should_stop(&self, _t_s: f64) -> bool {
        false
    }
}

/// Stops at the first pulse scheduled at or after the given time.
pub struct StopAt(pub f64);

impl StopSignal for StopAt {
    fn should_stop(&self, t_s: f64) -> bool {
        t_s >= self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Execution<T> {
    pub signal: CurrentSignal<T>,
    /// Onset time of the first suppressed pulse, when stopped early.
    pub stopped_early: Option<f64>,
    /// Realized `(start, end)` amplitudes after DAC quantization, mA.
    pub amplitude_ma: (f64, f64),
}

fn code_current(lut: &DacLut, code: u16, field: &'static str) -> Result<f64, DeviceError> {
    let ma = lut.current(code).ok_or_else(|| DeviceError::Validation {
        field,
        reason: format!("code {code} not in DAC table"),
    })?;
    Ok(ma.min(MAX_AMPLITUDE_MA))
}

/// The waveform a command produces once its codes pass through `lut`.
pub fn command_waveform<T: Scalar>(cmd: &StimCommand, lut: &DacLut) -> Result<Waveform<T>, DeviceError> {
    cmd.validate()?;
    let low = code_current(lut, cmd.amp_start_code, "amp_start")?;
    let high = code_current(lut, cmd.amp_end_code, "amp_end")?;
    let ms = |v: u16| T::lit(f64::from(v)) / T::lit(1000.0);
    let duration = ms(cmd.duration_ms);
    let timing = RampTiming::new(ms(cmd.ramp_up_ms), ms(cmd.hold_ms), ms(cmd.ramp_down_ms))?;
    let envelope = |lo: f64, hi: f64| {
        if lo == hi {
            Envelope::constant(T::lit(hi), duration)
        } else {
            Envelope::new(T::lit(lo), T::lit(hi), timing)
        }
    };
    let frequency = envelope(f64::from(cmd.freq_start_hz), f64::from(cmd.freq_end_hz))?;
    let amplitude = envelope(low, high)?;
    let pulse = PulseShape::new(u32::from(cmd.positive_width_us), u32::from(cmd.negative_width_us))?;
    Ok(Waveform::new(frequency, amplitude, pulse, cmd.mode.polarity())?)
}

/// Plays one stimulation command.
pub fn execute<T: Scalar, S: StopSignal + ?Sized>(
    cmd: &StimCommand,
    lut: &DacLut,
    sample_rate_hz: u32,
    stop: &S,
) -> Result<Execution<T>, DeviceError> {
    if !cmd.channels.can_stimulate() {
        return Err(DeviceError::NoCurrentPath);
    }
    let wf: Waveform<T> = command_waveform(cmd, lut)?;
    let (signal, stopped) = render(&wf, sample_rate_hz, |t| stop.should_stop(t.to_f64_lossy()))?;
    Ok(Execution {
        signal,
        stopped_early: stopped.map(Scalar::to_f64_lossy),
        amplitude_ma: (wf.amplitude.low.to_f64_lossy(), wf.amplitude.high.to_f64_lossy()),
    })
}

/// What the device answers to a frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Pong,
    Stopped,
    ChannelsSet(ChannelConfig),
    Stimulated(Execution<f64>),
}

/// Single-owner device state machine. Only the stop flag is shared.
pub struct VirtualDevice {
    lut: DacLut,
    sample_rate_hz: u32,
    channels: ChannelConfig,
    stop: Arc<AtomicBool>,
}

impl VirtualDevice {
    pub fn new(lut: DacLut, sample_rate_hz: u32) -> Self {
        Self {
            lut,
            sample_rate_hz,
            channels: ChannelConfig::idle(),
            stop: Arc::new(AtomicBool::new(false)),
        }
    }

    /// Handle other threads can use to raise the emergency stop.
    pub fn stop_handle(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.stop)
    }

    pub fn channels(&self) -> ChannelConfig {
        self.channels
    }

    pub fn lut(&self) -> &DacLut {
        &self.lut
    }

    pub fn handle(&mut self, cmd: &Command) -> Result<Response, DeviceError> {
        match cmd {
            Command::Ping => Ok(Response::Pong),
            Command::Stop => {
                self.channels = ChannelConfig::idle();
                self.stop.store(false, Ordering::Release);
                Ok(Response::Stopped)
            }
            Command::SetChannels(c) => {
                self.channels = *c;
                Ok(Response::ChannelsSet(*c))
            }
            Command::Stimulate(s) => {
                self.channels = s.channels;
                let result = execute(s, &self.lut, self.sample_rate_hz, &*self.stop);
                // the stop request applies to the run it interrupted only
                self.stop.store(false, Ordering::Release);
                result.map(Response::Stimulated)
            }
        }
    }

    pub fn handle_frame(&mut self, frame: &[u8]) -> Result<Response, DeviceError> {
        let cmd = decode(frame)?;
        self.handle(&cmd)
    }
}

/// Outcome of one line of a replayed frame file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayStep {
    pub line: usize,
    pub opcode: Option<Opcode>,
    pub channels: ChannelConfig,
    pub pulses: usize,
    pub energy_a2s: f64,
    pub net_charge_as: f64,
    pub stopped_early: Option<f64>,
    pub error: Option<String>,
}

/// Feeds a newline-delimited hex frame file through `device`. Blank lines
/// and `#` comments are skipped; bad frames are reported, not fatal.
pub fn replay<R: BufRead>(device: &mut VirtualDevice, input: R) -> std::io::Result<Vec<ReplayStep>> {
    let mut steps = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut step = ReplayStep {
            line: n + 1,
            opcode: None,
            channels: device.channels(),
            pulses: 0,
            energy_a2s: 0.0,
            net_charge_as: 0.0,
            stopped_early: None,
            error: None,
        };
        let outcome = codec::from_hex(trimmed).and_then(|bytes| {
            let cmd = decode(&bytes)?;
            step.opcode = Some(cmd.opcode());
            device.handle(&cmd)
        });
        match outcome {
            Ok(Response::Stimulated(exec)) => {
                step.pulses = exec.signal.pulse_count();
                step.energy_a2s = crate::energy::signal_energy(&exec.signal).a2s();
                step.net_charge_as = exec.signal.net_charge_as();
                step.stopped_early = exec.stopped_early;
            }
            Ok(_) => {}
            Err(e) => step.error = Some(e.to_string()),
        }
        step.channels = device.channels();
        steps.push(step);
    }
    Ok(steps)
}
