use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Category, Envelope, RampTiming, SignalError};
use crate::scalar::Scalar;

/// Hard current limit of the stimulator, mA.
pub const MAX_AMPLITUDE_MA: f64 = 3.0;
/// Fixed low-to-high distance of amplitude-modulated categories, mA.
pub const AMP_MODULATION_DEPTH_MA: f64 = 0.3;
/// Supported pulse half-width range, µs.
pub const PULSE_WIDTH_RANGE_US: (u32, u32) = (5, 1000);
/// Lowest sample rate that resolves a 300 µs half pulse with 30 samples.
pub const MIN_SAMPLE_RATE_HZ: u32 = 100_000;
pub const DEFAULT_SAMPLE_RATE_HZ: u32 = 1_000_000;

/// Widths of the two halves of a bi-phasic pulse, µs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PulseShape {
    pub positive_width_us: u32,
    pub negative_width_us: u32,
}

impl PulseShape {
    pub fn new(positive_width_us: u32, negative_width_us: u32) -> Result<Self, SignalError> {
        let (lo, hi) = PULSE_WIDTH_RANGE_US;
        for w in [positive_width_us, negative_width_us] {
            if !(lo..=hi).contains(&w) {
                return Err(SignalError::InvalidPulseWidth(w));
            }
        }
        Ok(Self { positive_width_us, negative_width_us })
    }

    pub fn symmetric(width_us: u32) -> Result<Self, SignalError> {
        Self::new(width_us, width_us)
    }

    /// Positive plus negative width, µs.
    pub fn active_width_us(&self) -> u32 {
        self.positive_width_us + self.negative_width_us
    }
}

impl Default for PulseShape {
    /// 300 µs + 300 µs.
    fn default() -> Self {
        Self { positive_width_us: 300, negative_width_us: 300 }
    }
}

/// Order and number of phases in each pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Positive (source) half first, then the negative half.
    #[default]
    PositiveFirst,
    NegativeFirst,
    /// Positive half only. Not charge balanced.
    Monophasic,
}

/// Index into an [`AmplitudeLadder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LevelIndex(pub usize);

impl fmt::Display for LevelIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Predefined intensity levels a participant chooses from, mA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AmplitudeLadder<T> {
    levels: Vec<T>,
}

impl<T: Scalar> AmplitudeLadder<T> {
    pub const STANDARD_LEN: usize = 26;

    /// 26 levels, 0.5 mA to 3.0 mA in 0.1 mA steps.
    pub fn standard() -> Self {
        let levels = (0..Self::STANDARD_LEN)
            .map(|j| T::from_count(5 + j) / T::lit(10.0))
            .collect();
        Self { levels }
    }

    /// A custom ladder. Levels must be strictly increasing and within
    /// `(0, 3.0]` mA.
    pub fn new(levels: Vec<T>) -> Result<Self, SignalError> {
        if levels.is_empty() {
            return Err(SignalError::InvalidLadder("empty".into()));
        }
        if levels.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(SignalError::InvalidLadder("levels must be strictly increasing".into()));
        }
        for &a in &levels {
            check_amplitude(a)?;
        }
        Ok(Self { levels })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[T] {
        &self.levels
    }

    pub fn amplitude(&self, level: LevelIndex) -> Result<T, SignalError> {
        self.levels
            .get(level.0)
            .copied()
            .ok_or(SignalError::LevelOutOfRange { level: level.0, len: self.levels.len() })
    }

    pub fn indices(&self) -> impl Iterator<Item = LevelIndex> {
        (0..self.levels.len()).map(LevelIndex)
    }

    /// Level whose amplitude is within `tol` mA of `amplitude`.
    pub fn find(&self, amplitude: T, tol: T) -> Option<LevelIndex> {
        self.levels
            .iter()
            .position(|&a| (a - amplitude).abs() <= tol)
            .map(LevelIndex)
    }
}

pub(crate) fn check_amplitude<T: Scalar>(a: T) -> Result<(), SignalError> {
    if a > T::zero() && a <= T::lit(MAX_AMPLITUDE_MA) {
        Ok(())
    } else {
        Err(SignalError::SafetyViolation { amplitude_ma: a.to_f64_lossy() })
    }
}

/// Declarative description of one stimulation.
///
/// `amplitude_ma` is the constant amplitude of tonic and frequency-modulated
/// categories and the peak (`high`) of amplitude-modulated ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct PatternSpec<T> {
    pub category: Category,
    pub amplitude_ma: T,
    #[serde(default)]
    pub pulse: PulseShape,
    #[serde(default)]
    pub timing: RampTiming<T>,
}

impl<T: Scalar> PatternSpec<T> {
    pub fn new(category: Category, amplitude_ma: T) -> Self {
        Self {
            category,
            amplitude_ma,
            pulse: PulseShape::default(),
            timing: RampTiming::button_press(),
        }
    }

    pub fn at_level(
        category: Category,
        ladder: &AmplitudeLadder<T>,
        level: LevelIndex,
    ) -> Result<Self, SignalError> {
        Ok(Self::new(category, ladder.amplitude(level)?))
    }

    pub fn duration(&self) -> T {
        self.timing.total()
    }

    pub fn frequency_envelope(&self) -> Result<Envelope<T>, SignalError> {
        let (lo, hi) = self.category.frequency_range_hz();
        let (lo, hi) = (T::lit(lo as f64), T::lit(hi as f64));
        if self.category.frequency_modulated() {
            Envelope::new(lo, hi, self.timing)
        } else {
            Envelope::constant(hi, self.duration())
        }
    }

    pub fn amplitude_envelope(&self) -> Result<Envelope<T>, SignalError> {
        check_amplitude(self.amplitude_ma)?;
        if self.category.amplitude_modulated() {
            let low = self.amplitude_ma - T::lit(AMP_MODULATION_DEPTH_MA);
            check_amplitude(low)?;
            Envelope::new(low, self.amplitude_ma, self.timing)
        } else {
            Envelope::constant(self.amplitude_ma, self.duration())
        }
    }

    /// The concrete waveform this pattern describes.
    pub fn waveform(&self) -> Result<Waveform<T>, SignalError> {
        Waveform::new(
            self.frequency_envelope()?,
            self.amplitude_envelope()?,
            self.pulse,
            Polarity::PositiveFirst,
        )
    }
}

/// Fully resolved pulse train parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waveform<T> {
    pub frequency: Envelope<T>,
    pub amplitude: Envelope<T>,
    pub pulse: PulseShape,
    pub polarity: Polarity,
}

impl<T: Scalar> Waveform<T> {
    pub fn new(
        frequency: Envelope<T>,
        amplitude: Envelope<T>,
        pulse: PulseShape,
        polarity: Polarity,
    ) -> Result<Self, SignalError> {
        if !(frequency.low > T::zero()) {
            return Err(SignalError::InvalidEnvelope("frequency must be > 0".into()));
        }
        if frequency.duration() != amplitude.duration() {
            return Err(SignalError::InvalidEnvelope(format!(
                "frequency ({}) and amplitude ({}) envelopes differ in duration",
                frequency.duration(),
                amplitude.duration()
            )));
        }
        check_amplitude(amplitude.low)?;
        check_amplitude(amplitude.high)?;
        Ok(Self { frequency, amplitude, pulse, polarity })
    }

    pub fn duration(&self) -> T {
        self.frequency.duration()
    }

    /// Width of the part of each pulse that carries current, µs.
    pub fn active_width_us(&self) -> u32 {
        match self.polarity {
            Polarity::Monophasic => self.pulse.positive_width_us,
            _ => self.pulse.active_width_us(),
        }
    }
}
