use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{Envelope, PatternSpec, Polarity, PulseShape, SignalError, Waveform, MIN_SAMPLE_RATE_HZ};
use crate::scalar::Scalar;

/// One scheduled pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseEvent<T> {
    /// Scheduled onset, s.
    pub onset_s: T,
    /// First sample of the pulse on the sampling grid.
    pub start_sample: usize,
    /// Magnitude shared by both halves, mA.
    pub amplitude_ma: T,
}

/// Uniformly sampled current waveform in mA.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentSignal<T> {
    sample_rate_hz: u32,
    duration_s: T,
    samples: Vec<T>,
    events: Vec<PulseEvent<T>>,
    pulse: PulseShape,
    polarity: Polarity,
}

impl<T: Scalar> CurrentSignal<T> {
    /// A signal made of explicit samples with no pulse bookkeeping.
    pub fn from_samples(sample_rate_hz: u32, samples: Vec<T>) -> Self {
        let duration_s = T::from_count(samples.len()) / T::lit(sample_rate_hz as f64);
        Self {
            sample_rate_hz,
            duration_s,
            samples,
            events: Vec::new(),
            pulse: PulseShape::default(),
            polarity: Polarity::default(),
        }
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    /// Sampling interval, s.
    pub fn dt(&self) -> T {
        T::one() / T::lit(self.sample_rate_hz as f64)
    }

    pub fn duration_s(&self) -> T {
        self.duration_s
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Pulses actually rendered into the samples.
    pub fn events(&self) -> &[PulseEvent<T>] {
        &self.events
    }

    pub fn pulse_count(&self) -> usize {
        self.events.len()
    }

    pub fn pulse_shape(&self) -> PulseShape {
        self.pulse
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    pub fn peak_abs_ma(&self) -> T {
        self.samples.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    /// Net transferred charge `sum(I) * dt`, A·s.
    pub fn net_charge_as(&self) -> T {
        let sum: T = self.samples.iter().copied().sum();
        sum * T::lit(1e-3) * self.dt()
    }

    /// Index range of the samples falling in `[t0, t1)`.
    pub fn index_range(&self, t0: T, t1: T) -> std::ops::Range<usize> {
        let rate = T::lit(self.sample_rate_hz as f64);
        let to_idx = |t: T| -> usize {
            let i = (t * rate).round().max(T::zero()).to_usize().unwrap_or(usize::MAX);
            i.min(self.samples.len())
        };
        let (a, b) = (to_idx(t0), to_idx(t1));
        a..b.max(a)
    }

    /// Writes `t_s,i_mA` rows, one per sample.
    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let mut w = io::BufWriter::new(w);
        writeln!(w, "t_s,i_mA")?;
        let rate = self.sample_rate_hz as f64;
        for (k, x) in self.samples.iter().enumerate() {
            writeln!(w, "{:.9},{:.6}", k as f64 / rate, x)?;
        }
        w.flush()
    }

    /// Keeps the largest-magnitude sample of each time bucket so pulses stay
    /// visible at screen resolution. Returns at most `max_points` points.
    pub fn downsample_peak(&self, max_points: usize) -> Vec<PreviewPoint<T>> {
        if self.samples.is_empty() || max_points == 0 {
            return Vec::new();
        }
        let bucket = self.samples.len().div_ceil(max_points);
        let rate = self.sample_rate_hz as f64;
        self.samples
            .chunks(bucket)
            .enumerate()
            .map(|(b, chunk)| {
                let peak = chunk
                    .iter()
                    .copied()
                    .fold(T::zero(), |m, x| if x.abs() > m.abs() { x } else { m });
                PreviewPoint {
                    t_s: (b * bucket) as f64 / rate,
                    i_ma: peak,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreviewPoint<T> {
    pub t_s: f64,
    pub i_ma: T,
}

/// Pulse onset times for a (possibly modulated) pulse rate.
///
/// A pulse starts at `t = 0` and at every later time the running phase
/// `∫ f dt` crosses an integer. Pulses whose active width would run past
/// `duration` are dropped.
pub fn pulse_onsets<T: Scalar>(freq: &Envelope<T>, duration: T, active_width_us: u32) -> Vec<T> {
    let width = T::lit(active_width_us as f64 * 1e-6);
    let last_cycle = freq.total_integral().ceil().to_usize().unwrap_or(0) + 1;
    let mut onsets = Vec::with_capacity(last_cycle);
    for k in 0..=last_cycle {
        let Some(t) = freq.time_at_integral(T::from_count(k)) else {
            break;
        };
        if t + width > duration {
            break;
        }
        debug_assert!(onsets.last().is_none_or(|&p| t > p));
        onsets.push(t);
    }
    onsets
}

/// Samples the stimulation described by `spec`.
pub fn synthesize<T: Scalar>(spec: &PatternSpec<T>, sample_rate_hz: u32) -> Result<CurrentSignal<T>, SignalError> {
    Ok(render(&spec.waveform()?, sample_rate_hz, |_| false)?.0)
}

/// Renders a waveform onto the sampling grid.
///
/// `stop` is polled before every pulse with the pulse's onset time; once it
/// returns `true` no further pulses are emitted and the onset time is
/// returned alongside the signal. Pulses are never cut in half.
pub fn render<T: Scalar, F: FnMut(T) -> bool>(
    waveform: &Waveform<T>,
    sample_rate_hz: u32,
    mut stop: F,
) -> Result<(CurrentSignal<T>, Option<T>), SignalError> {
    if sample_rate_hz < MIN_SAMPLE_RATE_HZ {
        return Err(SignalError::SampleRateTooLow(sample_rate_hz));
    }
    let duration = waveform.duration();
    let rate = sample_rate_hz as f64;
    let len = (rate * duration.to_f64_lossy()).round() as usize;
    let to_samples = |us: u32| ((us as u64 * sample_rate_hz as u64 + 500_000) / 1_000_000) as usize;
    let pos = to_samples(waveform.pulse.positive_width_us);
    let neg = match waveform.polarity {
        Polarity::Monophasic => 0,
        _ => to_samples(waveform.pulse.negative_width_us),
    };

    let onsets = pulse_onsets(&waveform.frequency, duration, waveform.active_width_us());
    let mut samples = vec![T::zero(); len];
    let mut events = Vec::with_capacity(onsets.len());
    let mut stopped = None;
    let mut busy_until = 0usize;
    for t in onsets {
        if stop(t) {
            stopped = Some(t);
            break;
        }
        let start = (t.to_f64_lossy() * rate).round() as usize;
        if start < busy_until {
            return Err(SignalError::OverlappingPulses {
                onset_s: t.to_f64_lossy(),
                active_width_us: waveform.active_width_us(),
            });
        }
        let end = start + pos + neg;
        if end > len {
            break;
        }
        let a = waveform.amplitude.value_unchecked(t);
        let (first, second) = match waveform.polarity {
            Polarity::NegativeFirst => (-a, a),
            _ => (a, -a),
        };
        let split = match waveform.polarity {
            Polarity::NegativeFirst => start + neg,
            _ => start + pos,
        };
        samples[start..split].fill(first);
        samples[split..end].fill(second);
        busy_until = end;
        events.push(PulseEvent { onset_s: t, start_sample: start, amplitude_ma: a });
    }

    let signal = CurrentSignal {
        sample_rate_hz,
        duration_s: duration,
        samples,
        events,
        pulse: waveform.pulse,
        polarity: waveform.polarity,
    };
    Ok((signal, stopped))
}
