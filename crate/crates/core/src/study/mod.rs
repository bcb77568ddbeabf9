//! Two-phase study protocol: intensity calibration, then naturalness
//! evaluation.
//!
//! [`SessionRecord`] is the persisted state machine. Calibration walks the
//! amplitude ladder one step at a time per category; once all eight
//! categories hold a level (accepted interactively or filled from
//! predictions) the session moves to a randomized 24-trial evaluation.

pub mod fixtures;
mod naturalness;
mod session;
mod synthetic;

use thiserror::Error;

use crate::signalgen::Category;

pub use naturalness::{
    improvement_report, summarize_naturalness, write_stats_csv, write_summary_csv, CategoryStats, Delta,
    ImprovementReport, NaturalnessSummary,
};
pub use session::{
    evaluation_schedule, read_cohort, write_cohort, CalibrationAction, CalibrationSource, Phase, SessionRecord,
    Trial, LADDER_LEN, MAX_RATING, REPETITIONS, TRIAL_COUNT,
};
pub use synthetic::{
    simulate_cohort, simulate_participant, synthetic_cohort, RatingModel, SyntheticParticipant, GAIN_LEVELS,
    SYNTHETIC_REFERENCE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StudyError {
    #[error("session is in phase {actual:?}, expected {expected:?}")]
    WrongPhase { expected: Phase, actual: Phase },
    #[error("{0} is already calibrated")]
    AlreadyCalibrated(Category),
    #[error("level {level} out of range for {category}")]
    LevelOutOfRange { category: Category, level: usize },
    #[error("expected rating for trial {expected}, got trial {got}")]
    TrialOutOfOrder { expected: u32, got: u32 },
    #[error("rating {0} outside 0..=5")]
    InvalidRating(u8),
    #[error("participant {0} has not finished the session")]
    NotDone(String),
    #[error("empty cohort")]
    EmptyCohort,
    #[error("invalid session record: {0}")]
    Invalid(String),
    #[error("malformed session JSON: {0}")]
    Json(String),
    #[error("i/o error: {0}")]
    Io(String),
}
