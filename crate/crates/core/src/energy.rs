//! Signal energy `E = ∫₀ᵀ |I(t)|² dt` and per-category energy profiles.
//!
//! Energies are carried in A²·s. Currents in the signal layer are mA, so the
//! conversion factor `1e-6` (mA² → A²) is applied once at the end of each sum.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::signalgen::{
    pulse_onsets, AmplitudeLadder, Category, CurrentSignal, LevelIndex, PatternSpec, SignalError,
};

const MA2_TO_A2: f64 = 1e-6;

/// Signal energy in A²·s.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnergyValue<T>(pub T);

impl<T: Scalar> EnergyValue<T> {
    pub fn a2s(self) -> T {
        self.0
    }

    /// Same energy in µA²·s.
    pub fn micro_a2s(self) -> T {
        self.0 * T::lit(1e12)
    }
}

impl<T: Scalar> fmt::Display for EnergyValue<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e} A²·s", self.0)
    }
}

fn sum_squares<T: Scalar>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |acc, &x| acc + x * x)
}

/// Rectangle-rule energy of a sampled signal. Exact for piecewise-constant
/// pulse trains up to alignment of pulse edges with the grid.
pub fn signal_energy<T: Scalar>(sig: &CurrentSignal<T>) -> EnergyValue<T> {
    EnergyValue(sum_squares(sig.samples()) * T::lit(MA2_TO_A2) * sig.dt())
}

/// Energy of the samples in `[t0, t1)`.
pub fn signal_energy_between<T: Scalar>(sig: &CurrentSignal<T>, t0: T, t1: T) -> EnergyValue<T> {
    let range = sig.index_range(t0, t1);
    EnergyValue(sum_squares(&sig.samples()[range]) * T::lit(MA2_TO_A2) * sig.dt())
}

/// Exact energy from the pulse schedule: `Σₖ a(tₖ)² · w` with `w` the active
/// pulse width. Needs no sampling.
pub fn closed_form_energy<T: Scalar>(spec: &PatternSpec<T>) -> Result<EnergyValue<T>, SignalError> {
    let wf = spec.waveform()?;
    let width_us = wf.active_width_us();
    let onsets = pulse_onsets(&wf.frequency, wf.duration(), width_us);
    let sum_a2 = onsets.iter().fold(T::zero(), |acc, &t| {
        let a = wf.amplitude.value_unchecked(t);
        acc + a * a
    });
    Ok(EnergyValue(sum_a2 * T::lit(width_us as f64 * 1e-6 * MA2_TO_A2)))
}

/// Continuous approximation `w · ∫ a(t)² f(t) dt` (pulse density times
/// per-pulse energy), integrated with the trapezoid rule on `steps`
/// intervals. Only a cross-check for [`closed_form_energy`].
pub fn envelope_energy_estimate<T: Scalar>(spec: &PatternSpec<T>, steps: usize) -> Result<EnergyValue<T>, SignalError> {
    let wf = spec.waveform()?;
    let duration = wf.duration();
    let dt = duration / T::from_count(steps);
    let density = |t: T| {
        let a = wf.amplitude.value_unchecked(t);
        a * a * wf.frequency.value_unchecked(t)
    };
    let half = T::lit(0.5);
    let mut acc = half * (density(T::zero()) + density(duration));
    for i in 1..steps {
        acc = acc + density(dt * T::from_count(i));
    }
    let width_s = T::lit(wf.active_width_us() as f64 * 1e-6);
    Ok(EnergyValue(acc * dt * width_s * T::lit(MA2_TO_A2)))
}

/// Energy of one category at every ladder level, plus the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyProfile<T> {
    pub category: Category,
    /// Ladder amplitudes (mA) the profile was built over.
    pub ladder: Vec<T>,
    pub per_level: Vec<EnergyValue<T>>,
    pub mean: EnergyValue<T>,
}

impl<T: Scalar> EnergyProfile<T> {
    /// Builds a profile from explicit per-level energies.
    pub fn from_levels(category: Category, ladder: Vec<T>, per_level: Vec<EnergyValue<T>>) -> Self {
        assert_eq!(ladder.len(), per_level.len(), "one energy per ladder level");
        let mean = if per_level.is_empty() {
            T::zero()
        } else {
            per_level.iter().map(|e| e.0).sum::<T>() / T::from_count(per_level.len())
        };
        Self { category, ladder, per_level, mean: EnergyValue(mean) }
    }

    pub fn len(&self) -> usize {
        self.per_level.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_level.is_empty()
    }

    pub fn energy_at(&self, level: LevelIndex) -> Option<EnergyValue<T>> {
        self.per_level.get(level.0).copied()
    }

    pub fn amplitude_at(&self, level: LevelIndex) -> Option<T> {
        self.ladder.get(level.0).copied()
    }

    pub fn min(&self) -> Option<EnergyValue<T>> {
        self.per_level.first().copied()
    }

    pub fn max(&self) -> Option<EnergyValue<T>> {
        self.per_level.last().copied()
    }

    /// Level whose energy is closest to `energy`; ties go to the lower level.
    pub fn nearest_level(&self, energy: T) -> LevelIndex {
        let mut best = 0;
        let mut best_gap = T::infinity();
        for (j, e) in self.per_level.iter().enumerate() {
            let gap = (e.0 - energy).abs();
            if gap < best_gap {
                best = j;
                best_gap = gap;
            }
        }
        LevelIndex(best)
    }

    /// Same profile with every energy multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        let per_level = self.per_level.iter().map(|e| EnergyValue(e.0 * factor)).collect();
        Self::from_levels(self.category, self.ladder.clone(), per_level)
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.per_level.windows(2).all(|w| w[0].0 < w[1].0)
    }
}

/// Profile of `category` over `ladder` with the default pulse and timing.
pub fn build_profile<T: Scalar>(category: Category, ladder: &AmplitudeLadder<T>) -> Result<EnergyProfile<T>, SignalError> {
    build_profile_with(&PatternSpec::new(category, ladder.levels()[0]), ladder)
}

/// Profile over `ladder` keeping every field of `template` but the amplitude.
pub fn build_profile_with<T: Scalar>(
    template: &PatternSpec<T>,
    ladder: &AmplitudeLadder<T>,
) -> Result<EnergyProfile<T>, SignalError> {
    let per_level = ladder
        .levels()
        .iter()
        .map(|&a| closed_form_energy(&PatternSpec { amplitude_ma: a, ..*template }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EnergyProfile::from_levels(template.category, ladder.levels().to_vec(), per_level))
}

/// Profiles for several categories, keyed by category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProfileSet<T> {
    profiles: BTreeMap<Category, EnergyProfile<T>>,
}

impl<T: Scalar> ProfileSet<T> {
    /// All eight categories over `ladder`.
    pub fn build(ladder: &AmplitudeLadder<T>) -> Result<Self, SignalError> {
        let profiles = Category::ALL
            .into_iter()
            .map(|c| build_profile(c, ladder).map(|p| (c, p)))
            .collect::<Result<_, _>>()?;
        Ok(Self { profiles })
    }

    pub fn standard() -> Result<Self, SignalError> {
        Self::build(&AmplitudeLadder::standard())
    }

    pub fn get(&self, category: Category) -> Option<&EnergyProfile<T>> {
        self.profiles.get(&category)
    }

    pub fn insert(&mut self, profile: EnergyProfile<T>) {
        self.profiles.insert(profile.category, profile);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Category, &EnergyProfile<T>)> {
        self.profiles.iter()
    }

    pub fn categories(&self) -> impl Iterator<Item = Category> + '_ {
        self.profiles.keys().copied()
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            profiles: self.profiles.iter().map(|(c, p)| (*c, p.scaled(factor))).collect(),
        }
    }
}

impl<T: Scalar> FromIterator<EnergyProfile<T>> for ProfileSet<T> {
    fn from_iter<I: IntoIterator<Item = EnergyProfile<T>>>(iter: I) -> Self {
        Self {
            profiles: iter.into_iter().map(|p| (p.category, p)).collect(),
        }
    }
}

/// Writes `category,level_index,amplitude_mA,energy_A2s` rows, followed by
/// one `<category>,mean,,<mean>` summary row per category.
pub fn write_profiles_csv<T: Scalar, W: Write>(profiles: &ProfileSet<T>, w: W) -> io::Result<()> {
    let mut w = io::BufWriter::new(w);
    writeln!(w, "category,level_index,amplitude_mA,energy_A2s")?;
    for (cat, p) in profiles.iter() {
        for (j, (a, e)) in p.ladder.iter().zip(&p.per_level).enumerate() {
            writeln!(w, "{cat},{j},{a:.1},{:e}", e.0)?;
        }
    }
    for (cat, p) in profiles.iter() {
        writeln!(w, "{cat},mean,,{:e}", p.mean.0)?;
    }
    w.flush()
}
