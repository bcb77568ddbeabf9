//! Naturalness rating fixture.
//!
//! A 100-participant cohort (300 ratings per category) whose category means
//! are exactly the published ranking means: 2.59, 2.59, 2.54, 2.50, 2.49,
//! 2.46, 2.36 and 2.25. Freq 40-170 Hz and Amp 100 Hz tie on the mean;
//! Freq 40-170 Hz has the higher median (3 vs 2), so it ranks first.
//! Only for exercising aggregation and report code.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::session::{CalibrationSource, Phase, SessionRecord, Trial, REPETITIONS};
use crate::signalgen::{Category, LevelIndex};

pub const REFERENCE_PARTICIPANTS: usize = 100;

/// Number of 0, 1, 2, 3, 4 and 5 ratings per category (each sums to 300).
pub fn reference_rating_counts(category: Category) -> [u32; 6] {
    match category {
        Category::Freq40_170 => [20, 30, 83, 107, 40, 20],
        Category::Amp100 => [10, 40, 110, 80, 23, 37],
        Category::Amp20 => [0, 0, 138, 162, 0, 0],
        Category::Both20_100 => [0, 0, 150, 150, 0, 0],
        Category::Both40_170 => [0, 0, 153, 147, 0, 0],
        Category::Tonic100 => [10, 35, 112, 103, 30, 10],
        Category::Freq20_100 => [0, 0, 192, 108, 0, 0],
        Category::Tonic20 => [0, 0, 225, 75, 0, 0],
    }
}

/// Published means, in ranking order.
pub const REFERENCE_MEANS: [(Category, f64); 8] = [
    (Category::Freq40_170, 2.59),
    (Category::Amp100, 2.59),
    (Category::Amp20, 2.54),
    (Category::Both20_100, 2.5),
    (Category::Both40_170, 2.49),
    (Category::Tonic100, 2.46),
    (Category::Freq20_100, 2.36),
    (Category::Tonic20, 2.25),
];

/// Builds the fixture cohort. All participants are fully calibrated at
/// level 5 and have completed all 24 trials in their own schedule order.
pub fn reference_cohort() -> Vec<SessionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7AB1E4);
    let mut pools: BTreeMap<Category, Vec<u8>> = BTreeMap::new();
    for c in Category::ALL {
        let mut pool: Vec<u8> = reference_rating_counts(c)
            .iter()
            .enumerate()
            .flat_map(|(score, &n)| std::iter::repeat_n(score as u8, n as usize))
            .collect();
        pool.shuffle(&mut rng);
        pools.insert(c, pool);
    }

    (0..REFERENCE_PARTICIPANTS)
        .map(|p| {
            let mut record = SessionRecord::new(format!("F{:03}", p + 1), 1000 + p as u64);
            for c in Category::ALL {
                record.calibration.insert(c, LevelIndex(5));
                record.calibration_source.insert(c, CalibrationSource::Interactive);
            }
            let mut used: BTreeMap<Category, usize> = BTreeMap::new();
            for (k, c) in record.schedule().into_iter().enumerate() {
                let n = used.entry(c).or_default();
                let rating = pools[&c][p * REPETITIONS + *n];
                *n += 1;
                record.trials.push(Trial { index: k as u32 + 1, category: c, rating });
            }
            record.phase = Phase::Done;
            record
        })
        .collect()
}
