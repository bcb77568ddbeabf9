use serde::{Deserialize, Serialize};

use super::SignalError;
use crate::scalar::Scalar;

/// Ramp-up, hold and ramp-down durations in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampTiming<T> {
    pub ramp_up: T,
    pub hold: T,
    pub ramp_down: T,
}

impl<T: Scalar> RampTiming<T> {
    pub fn new(ramp_up: T, hold: T, ramp_down: T) -> Result<Self, SignalError> {
        for (name, v) in [("ramp_up", ramp_up), ("hold", hold), ("ramp_down", ramp_down)] {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(SignalError::InvalidEnvelope(format!("{name} must be >= 0, got {v}")));
            }
        }
        if ramp_up + hold + ramp_down <= T::zero() {
            return Err(SignalError::InvalidEnvelope("total duration must be > 0".into()));
        }
        Ok(Self { ramp_up, hold, ramp_down })
    }

    /// 0.7 s up, 1.6 s hold, 0.7 s down: a 3 s press.
    pub fn button_press() -> Self {
        Self {
            ramp_up: T::lit(0.7),
            hold: T::lit(1.6),
            ramp_down: T::lit(0.7),
        }
    }

    pub fn total(&self) -> T {
        self.ramp_up + self.hold + self.ramp_down
    }
}

impl<T: Scalar> Default for RampTiming<T> {
    fn default() -> Self {
        Self::button_press()
    }
}

/// Piecewise-linear ramp-and-hold profile of a value (mA or Hz).
///
/// The value rises linearly from `low` to `high` over `ramp_up`, stays at
/// `high` for `hold`, then falls back to `low` over `ramp_down`. A constant
/// value is an envelope with `low == high`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub low: T,
    pub high: T,
    #[serde(flatten)]
    pub timing: RampTiming<T>,
}

impl<T: Scalar> Envelope<T> {
    pub fn new(low: T, high: T, timing: RampTiming<T>) -> Result<Self, SignalError> {
        if !low.is_finite() || !high.is_finite() || low > high {
            return Err(SignalError::InvalidEnvelope(format!(
                "need low <= high, got low={low} high={high}"
            )));
        }
        let timing = RampTiming::new(timing.ramp_up, timing.hold, timing.ramp_down)?;
        Ok(Self { low, high, timing })
    }

    /// Ramp-and-hold with the default 0.7/1.6/0.7 s timing.
    pub fn ramp_and_hold(low: T, high: T) -> Result<Self, SignalError> {
        Self::new(low, high, RampTiming::button_press())
    }

    /// A flat envelope over `duration` seconds.
    pub fn constant(value: T, duration: T) -> Result<Self, SignalError> {
        Self::new(value, value, RampTiming::new(T::zero(), duration, T::zero())?)
    }

    pub fn duration(&self) -> T {
        self.timing.total()
    }

    pub fn is_constant(&self) -> bool {
        self.low == self.high
    }

    /// Envelope value at time `t`, which must lie in `[0, duration]`.
    pub fn value_at(&self, t: T) -> Result<T, SignalError> {
        let total = self.duration();
        if !(t >= T::zero() && t <= total) {
            return Err(SignalError::OutOfDomain {
                t: t.to_f64_lossy(),
                duration: total.to_f64_lossy(),
            });
        }
        Ok(self.value_unchecked(t))
    }

    pub(crate) fn value_unchecked(&self, t: T) -> T {
        let RampTiming { ramp_up, hold, ramp_down } = self.timing;
        let span = self.high - self.low;
        if t < ramp_up {
            self.low + span * (t / ramp_up)
        } else if t <= ramp_up + hold {
            self.high
        } else if ramp_down > T::zero() {
            let remaining = (self.duration() - t).max(T::zero());
            self.low + span * (remaining / ramp_down)
        } else {
            self.high
        }
    }

    /// Integral of the envelope from 0 to `t` (clamped to the envelope span).
    ///
    /// For a frequency envelope this is the phase in cycles.
    pub fn integral_to(&self, t: T) -> T {
        let RampTiming { ramp_up, hold, ramp_down } = self.timing;
        let two = T::lit(2.0);
        let t = t.max(T::zero()).min(self.duration());
        let span = self.high - self.low;
        let (up_area, hold_area) = self.segment_areas();
        if t <= ramp_up {
            if ramp_up == T::zero() {
                return T::zero();
            }
            return self.low * t + span * t * t / (two * ramp_up);
        }
        if t <= ramp_up + hold {
            return up_area + self.high * (t - ramp_up);
        }
        let u = t - ramp_up - hold;
        let down = if ramp_down == T::zero() {
            T::zero()
        } else {
            self.high * u - span * u * u / (two * ramp_down)
        };
        up_area + hold_area + down
    }

    /// Total integral over the whole envelope.
    pub fn total_integral(&self) -> T {
        let (up, hold) = self.segment_areas();
        up + hold + self.down_area()
    }

    fn segment_areas(&self) -> (T, T) {
        let two = T::lit(2.0);
        (
            self.timing.ramp_up * (self.low + self.high) / two,
            self.timing.hold * self.high,
        )
    }

    fn down_area(&self) -> T {
        self.timing.ramp_down * (self.low + self.high) / T::lit(2.0)
    }

    /// Inverse of [`integral_to`](Self::integral_to): the earliest time at
    /// which the running integral reaches `target`. `None` past the end.
    ///
    /// Requires a strictly positive envelope (a frequency profile).
    pub fn time_at_integral(&self, target: T) -> Option<T> {
        let RampTiming { ramp_up, hold, ramp_down } = self.timing;
        let two = T::lit(2.0);
        let four = T::lit(4.0);
        if target < T::zero() {
            return None;
        }
        if target == T::zero() {
            return Some(T::zero());
        }
        let span = self.high - self.low;
        let (up_area, hold_area) = self.segment_areas();

        if ramp_up > T::zero() && target <= up_area {
            // low*t + a*t^2 = target, a = span / (2 ramp_up); stable root form.
            let a = span / (two * ramp_up);
            let disc = (self.low * self.low + four * a * target).max(T::zero());
            let t = two * target / (self.low + disc.sqrt());
            return Some(t.min(ramp_up));
        }
        if target <= up_area + hold_area {
            let t = ramp_up + (target - up_area) / self.high;
            return Some(t.min(ramp_up + hold));
        }
        let q = target - up_area - hold_area;
        if ramp_down > T::zero() && q <= self.down_area() {
            // high*u - a*u^2 = q, a = span / (2 ramp_down).
            let a = span / (two * ramp_down);
            let disc = (self.high * self.high - four * a * q).max(T::zero());
            let u = two * q / (self.high + disc.sqrt());
            return Some((ramp_up + hold + u).min(self.duration()));
        }
        None
    }

    /// Multiplies the value axis by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            low: self.low * factor,
            high: self.high * factor,
            timing: self.timing,
        }
    }
}
