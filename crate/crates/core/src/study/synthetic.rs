//! Synthetic participants for headless runs.
//!
//! A synthetic participant picks, for every category, the ladder level whose
//! energy is nearest to `gain · mean(E_i) / mean(E_Tonic100) · (1 + ε)` with
//! `ε ~ N(0, σ)`. This is the same law the predictor assumes, so with
//! `σ = 0` the predictor must recover every selection. It is a test oracle,
//! not a model of human perception.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::fixtures::reference_rating_counts;
use super::session::{CalibrationSource, Phase, SessionRecord, Trial, MAX_RATING};
use crate::energy::ProfileSet;
use crate::scalar::Scalar;
use crate::signalgen::{Category, LevelIndex};

/// Category whose energy the participant's gain is expressed in.
pub const SYNTHETIC_REFERENCE: Category = Category::Tonic100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParticipant<T> {
    pub participant_id: String,
    /// Preferred Tonic 100 Hz energy, A²·s.
    pub gain: T,
    /// Relative standard deviation of the energy the participant aims for.
    pub noise_sigma: T,
    pub rng_seed: u64,
}

/// Per-category rating weights over the scores 0..=5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingModel {
    pub weights: BTreeMap<Category, [f64; 6]>,
}

impl Default for RatingModel {
    /// Rating frequencies of the shipped naturalness fixture.
    fn default() -> Self {
        let weights = Category::ALL
            .into_iter()
            .map(|c| (c, reference_rating_counts(c).map(|n| n as f64)))
            .collect();
        Self { weights }
    }
}

impl RatingModel {
    fn sampler(&self, category: Category) -> WeightedIndex<f64> {
        let w = self.weights.get(&category).copied().unwrap_or([1.0; 6]);
        WeightedIndex::new(w).unwrap_or_else(|_| WeightedIndex::new([1.0; 6]).expect("uniform weights"))
    }
}

/// Runs a complete session (calibration and evaluation) for `p`.
pub fn simulate_participant<T: Scalar>(
    p: &SyntheticParticipant<T>,
    profiles: &ProfileSet<T>,
    ratings: &RatingModel,
) -> SessionRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(p.rng_seed);
    let ref_mean = profiles
        .get(SYNTHETIC_REFERENCE)
        .expect("profile set includes the reference")
        .mean
        .a2s();
    let sigma = p.noise_sigma.to_f64_lossy().max(0.0);
    let normal = Normal::new(0.0, sigma).expect("finite sigma");

    let mut record = SessionRecord::new(p.participant_id.clone(), p.rng_seed);
    for category in Category::ALL {
        let Some(profile) = profiles.get(category) else { continue };
        let eps: f64 = if sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
        let target = p.gain * profile.mean.a2s() / ref_mean * T::lit(1.0 + eps);
        record.calibration.insert(category, profile.nearest_level(target));
        record.calibration_source.insert(category, CalibrationSource::Interactive);
    }
    record.phase = Phase::Evaluation;

    let samplers: BTreeMap<Category, WeightedIndex<f64>> =
        Category::ALL.into_iter().map(|c| (c, ratings.sampler(c))).collect();
    for (k, category) in record.schedule().into_iter().enumerate() {
        let rating = samplers[&category].sample(&mut rng) as u8;
        debug_assert!(rating <= MAX_RATING);
        record.trials.push(Trial { index: k as u32 + 1, category, rating });
    }
    record.phase = Phase::Done;
    record
}

/// Lowest and highest Tonic 100 Hz level a synthetic participant prefers.
/// Keeps every category's implied choice inside the ladder.
pub const GAIN_LEVELS: (usize, usize) = (8, 19);

/// Draws `n` participants whose preferred Tonic 100 Hz energy sits exactly
/// on a ladder level in [`GAIN_LEVELS`].
pub fn synthetic_cohort<T: Scalar>(
    n: usize,
    noise_sigma: T,
    seed: u64,
    profiles: &ProfileSet<T>,
) -> Vec<SyntheticParticipant<T>> {
    let reference = profiles.get(SYNTHETIC_REFERENCE).expect("profile set includes the reference");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let level = rng.random_range(GAIN_LEVELS.0..=GAIN_LEVELS.1);
            let gain = reference
                .energy_at(LevelIndex(level))
                .expect("gain level within ladder")
                .a2s();
            SyntheticParticipant {
                participant_id: format!("P{}", i + 1),
                gain,
                noise_sigma,
                rng_seed: rng.next_u64(),
            }
        })
        .collect()
}

/// Convenience: draw a cohort and simulate every member.
pub fn simulate_cohort<T: Scalar>(
    n: usize,
    noise_sigma: T,
    seed: u64,
    profiles: &ProfileSet<T>,
    ratings: &RatingModel,
) -> Vec<SessionRecord> {
    synthetic_cohort(n, noise_sigma, seed, profiles)
        .iter()
        .map(|p| simulate_participant(p, profiles, ratings))
        .collect()
}
