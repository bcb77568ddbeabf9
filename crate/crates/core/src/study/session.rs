use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StudyError;
use crate::signalgen::{AmplitudeLadder, Category, LevelIndex};

/// Repetitions of each category in the evaluation phase.
pub const REPETITIONS: usize = 3;
/// 8 categories × 3 repetitions.
pub const TRIAL_COUNT: usize = 24;
pub const MAX_RATING: u8 = 5;
/// Number of ladder levels a participant can step through.
pub const LADDER_LEN: usize = AmplitudeLadder::<f64>::STANDARD_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Calibration,
    Evaluation,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationAction {
    Up,
    Down,
    Accept,
}

/// How a calibrated level was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationSource {
    Interactive,
    Predicted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    /// 1-based position in the evaluation schedule.
    pub index: u32,
    pub category: Category,
    pub rating: u8,
}

/// Persisted state of one participant's session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub participant_id: String,
    pub rng_seed: u64,
    pub calibration: BTreeMap<Category, LevelIndex>,
    pub trials: Vec<Trial>,
    pub phase: Phase,
    /// Levels being adjusted but not yet accepted.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub pending: BTreeMap<Category, LevelIndex>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub calibration_source: BTreeMap<Category, CalibrationSource>,
}

/// Randomized trial order: every category three times, shuffled with a
/// ChaCha8 stream seeded from `seed`.
pub fn evaluation_schedule(seed: u64) -> Vec<Category> {
    let mut order: Vec<Category> = Category::ALL
        .into_iter()
        .flat_map(|c| std::iter::repeat_n(c, REPETITIONS))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order
}

impl SessionRecord {
    pub fn new(participant_id: impl Into<String>, rng_seed: u64) -> Self {
        Self {
            participant_id: participant_id.into(),
            rng_seed,
            calibration: BTreeMap::new(),
            trials: Vec::new(),
            phase: Phase::Calibration,
            pending: BTreeMap::new(),
            calibration_source: BTreeMap::new(),
        }
    }

    fn expect_phase(&self, expected: Phase) -> Result<(), StudyError> {
        if self.phase == expected {
            Ok(())
        } else {
            Err(StudyError::WrongPhase { expected, actual: self.phase })
        }
    }

    /// Level currently offered for `category` (index 0 until moved).
    pub fn current_level(&self, category: Category) -> LevelIndex {
        self.calibration
            .get(&category)
            .or_else(|| self.pending.get(&category))
            .copied()
            .unwrap_or_default()
    }

    /// One step of the calibration ladder. Up/Down move by one level and
    /// clamp at the ladder ends; Accept records the current level.
    pub fn calibration_step(&mut self, category: Category, action: CalibrationAction) -> Result<(), StudyError> {
        self.expect_phase(Phase::Calibration)?;
        if self.calibration.contains_key(&category) {
            return Err(StudyError::AlreadyCalibrated(category));
        }
        let level = self.current_level(category).0;
        match action {
            CalibrationAction::Up => {
                self.pending.insert(category, LevelIndex((level + 1).min(LADDER_LEN - 1)));
            }
            CalibrationAction::Down => {
                self.pending.insert(category, LevelIndex(level.saturating_sub(1)));
            }
            CalibrationAction::Accept => {
                self.pending.remove(&category);
                self.calibration.insert(category, LevelIndex(level));
                self.calibration_source.insert(category, CalibrationSource::Interactive);
                self.advance_if_calibrated();
            }
        }
        Ok(())
    }

    /// Fills every not-yet-calibrated category with a predicted level.
    pub fn accept_predictions(&mut self, levels: &BTreeMap<Category, LevelIndex>) -> Result<usize, StudyError> {
        self.expect_phase(Phase::Calibration)?;
        if let Some((c, l)) = levels.iter().find(|(_, l)| l.0 >= LADDER_LEN) {
            return Err(StudyError::LevelOutOfRange { category: *c, level: l.0 });
        }
        let mut applied = 0;
        for (&c, &l) in levels {
            if self.calibration.contains_key(&c) {
                continue;
            }
            self.pending.remove(&c);
            self.calibration.insert(c, l);
            self.calibration_source.insert(c, CalibrationSource::Predicted);
            applied += 1;
        }
        self.advance_if_calibrated();
        Ok(applied)
    }

    fn advance_if_calibrated(&mut self) {
        if self.phase == Phase::Calibration && Category::ALL.iter().all(|c| self.calibration.contains_key(c)) {
            self.phase = Phase::Evaluation;
        }
    }

    pub fn uncalibrated(&self) -> Vec<Category> {
        Category::ALL
            .into_iter()
            .filter(|c| !self.calibration.contains_key(c))
            .collect()
    }

    pub fn schedule(&self) -> Vec<Category> {
        evaluation_schedule(self.rng_seed)
    }

    /// The next trial to rate, as `(index, category)`.
    pub fn next_trial(&self) -> Option<(u32, Category)> {
        if self.phase != Phase::Evaluation {
            return None;
        }
        let k = self.trials.len();
        self.schedule().get(k).map(|&c| (k as u32 + 1, c))
    }

    /// Records the rating for trial `index`, which must be the next one.
    pub fn rate(&mut self, index: u32, rating: u8) -> Result<(), StudyError> {
        self.expect_phase(Phase::Evaluation)?;
        if rating > MAX_RATING {
            return Err(StudyError::InvalidRating(rating));
        }
        let (expected, category) = self.next_trial().expect("evaluation phase has a next trial");
        if index != expected {
            return Err(StudyError::TrialOutOfOrder { expected, got: index });
        }
        self.trials.push(Trial { index, category, rating });
        if self.trials.len() == TRIAL_COUNT {
            self.phase = Phase::Done;
        }
        Ok(())
    }

    pub fn interactive_calibrations(&self) -> usize {
        self.calibration
            .keys()
            .filter(|c| self.calibration_source.get(c) != Some(&CalibrationSource::Predicted))
            .count()
    }

    /// Share of categories that did not need interactive calibration, percent.
    pub fn calibration_reduction_percent(&self) -> f64 {
        let total = Category::ALL.len() as f64;
        (1.0 - self.interactive_calibrations() as f64 / total) * 100.0
    }

    /// Checks the structural invariants of a record.
    pub fn validate(&self) -> Result<(), StudyError> {
        let bad = |msg: String| Err(StudyError::Invalid(msg));
        if let Some((c, l)) = self
            .calibration
            .iter()
            .chain(&self.pending)
            .find(|(_, l)| l.0 >= LADDER_LEN)
        {
            return Err(StudyError::LevelOutOfRange { category: *c, level: l.0 });
        }
        let calibrated = self.calibration.len() == Category::ALL.len();
        if self.phase != Phase::Calibration && !calibrated {
            return bad(format!("phase {:?} with {} calibrated categories", self.phase, self.calibration.len()));
        }
        if self.phase == Phase::Calibration && !self.trials.is_empty() {
            return bad("trials recorded before calibration finished".into());
        }
        let schedule = self.schedule();
        for (k, t) in self.trials.iter().enumerate() {
            if t.index as usize != k + 1 || schedule.get(k) != Some(&t.category) {
                return bad(format!("trial {} does not follow the schedule", t.index));
            }
            if t.rating > MAX_RATING {
                return Err(StudyError::InvalidRating(t.rating));
            }
        }
        match (self.phase, self.trials.len()) {
            (Phase::Done, TRIAL_COUNT) => {}
            (Phase::Done, n) => return bad(format!("done with {n} trials")),
            (_, n) if n >= TRIAL_COUNT => return bad(format!("{n} trials but not done")),
            _ => {}
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, StudyError> {
        let record: Self = serde_json::from_str(text).map_err(|e| StudyError::Json(e.to_string()))?;
        record.validate()?;
        Ok(record)
    }
}

/// Writes one compact JSON record per line.
pub fn write_cohort<W: Write>(records: &[SessionRecord], mut w: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Reads newline-delimited records, skipping blank lines.
pub fn read_cohort<R: BufRead>(r: R) -> Result<Vec<SessionRecord>, StudyError> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| StudyError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SessionRecord =
            serde_json::from_str(&line).map_err(|e| StudyError::Json(format!("line {}: {e}", n + 1)))?;
        record.validate()?;
        out.push(record);
    }
    Ok(out)
}
