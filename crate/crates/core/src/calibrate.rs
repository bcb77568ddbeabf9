//! Preferred-intensity prediction from a single calibrated reference.
//!
//! Given the energy a participant chose for a reference category, the
//! energy for another category `i` is predicted as
//!
//! ```text
//! E_i_pred = E_ref_selected · mean(E_i) / mean(E_ref)          (mean mode)
//! E_i_pred = E_ref_selected · E_i(x) / E_ref(x)                (matched level x)
//! ```
//!
//! and mapped back to the ladder level with the nearest energy.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{EnergyProfile, EnergyValue, ProfileSet};
use crate::scalar::Scalar;
use crate::signalgen::{Category, FrequencyBand, LevelIndex};
use crate::study::SessionRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrateError {
    #[error("reference profile for {0} has zero energy")]
    DegenerateProfile(Category),
    #[error("profiles for {0} and {1} were built over different ladders")]
    LadderMismatch(Category, Category),
    #[error("level {level} out of range for {category}")]
    LevelOutOfRange { category: Category, level: usize },
    #[error("no calibration for reference category {0}")]
    MissingReference(Category),
    #[error("no energy profile for {0}")]
    MissingProfile(Category),
    #[error("R² needs at least two paired values, got {0}")]
    TooFewPoints(usize),
    #[error("R² needs equal lengths, got {0} selected and {1} predicted")]
    LengthMismatch(usize, usize),
    #[error("selected values have zero variance; R² undefined")]
    UndefinedVariance,
}

/// A category and the level a participant chose for it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint<T> {
    pub category: Category,
    pub selected_level: LevelIndex,
    pub selected_energy: EnergyValue<T>,
}

impl<T: Scalar> CalibrationPoint<T> {
    /// Looks the selected energy up in the category's profile.
    pub fn from_profile(profile: &EnergyProfile<T>, level: LevelIndex) -> Result<Self, CalibrateError> {
        let selected_energy = profile.energy_at(level).ok_or(CalibrateError::LevelOutOfRange {
            category: profile.category,
            level: level.0,
        })?;
        Ok(Self { category: profile.category, selected_level: level, selected_energy })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult<T> {
    pub category: Category,
    pub reference_used: Category,
    pub predicted_energy: EnergyValue<T>,
    pub predicted_level: LevelIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupingMode {
    SingleReference,
    FrequencyBands,
}

/// Which calibrated category seeds the prediction for each category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupingPolicy {
    pub mode: GroupingMode,
    pub band_map: BTreeMap<Category, Category>,
}

impl GroupingPolicy {
    /// Every category is predicted from `reference`.
    pub fn single_reference(reference: Category) -> Self {
        Self {
            mode: GroupingMode::SingleReference,
            band_map: Category::ALL.into_iter().map(|c| (c, reference)).collect(),
        }
    }

    /// Tonic 20 Hz for the 20 Hz categories, Tonic 100 Hz for the rest.
    pub fn frequency_bands() -> Self {
        let band_map = Category::ALL
            .into_iter()
            .map(|c| {
                let r = match c.band() {
                    FrequencyBand::Low => Category::Tonic20,
                    FrequencyBand::High => Category::Tonic100,
                };
                (c, r)
            })
            .collect();
        Self { mode: GroupingMode::FrequencyBands, band_map }
    }

    pub fn reference_for(&self, category: Category) -> Category {
        self.band_map.get(&category).copied().unwrap_or(category)
    }

    /// Categories that must be calibrated interactively.
    pub fn references(&self) -> Vec<Category> {
        let mut refs: Vec<_> = self.band_map.values().copied().collect();
        refs.sort();
        refs.dedup();
        refs
    }

    pub fn is_reference(&self, category: Category) -> bool {
        self.reference_for(category) == category
    }
}

fn check_same_ladder<T: Scalar>(a: &EnergyProfile<T>, b: &EnergyProfile<T>) -> Result<(), CalibrateError> {
    if a.ladder == b.ladder {
        Ok(())
    } else {
        Err(CalibrateError::LadderMismatch(a.category, b.category))
    }
}

fn finish<T: Scalar>(
    reference: &CalibrationPoint<T>,
    target: &EnergyProfile<T>,
    predicted: T,
) -> PredictionResult<T> {
    // Identity short-circuit keeps the calibrated level even where two
    // ladder levels share an energy.
    let predicted_level = if target.category == reference.category {
        reference.selected_level
    } else {
        target.nearest_level(predicted)
    };
    PredictionResult {
        category: target.category,
        reference_used: reference.category,
        predicted_energy: EnergyValue(predicted),
        predicted_level,
    }
}

/// Mean-ratio prediction.
pub fn predict_by_mean<T: Scalar>(
    reference: &CalibrationPoint<T>,
    target: &EnergyProfile<T>,
    ref_profile: &EnergyProfile<T>,
) -> Result<PredictionResult<T>, CalibrateError> {
    check_same_ladder(target, ref_profile)?;
    let denom = ref_profile.mean.a2s();
    if denom == T::zero() {
        return Err(CalibrateError::DegenerateProfile(ref_profile.category));
    }
    let predicted = reference.selected_energy.a2s() * (target.mean.a2s() / denom);
    Ok(finish(reference, target, predicted))
}

/// Matched-level prediction: the ratio of the two categories at ladder
/// level `x`. `None` uses the reference's own selected level.
pub fn predict_by_matched_level<T: Scalar>(
    reference: &CalibrationPoint<T>,
    target: &EnergyProfile<T>,
    ref_profile: &EnergyProfile<T>,
    x: Option<LevelIndex>,
) -> Result<PredictionResult<T>, CalibrateError> {
    let x = x.unwrap_or(reference.selected_level);
    let out_of_range = |p: &EnergyProfile<T>| CalibrateError::LevelOutOfRange { category: p.category, level: x.0 };
    let num = target.energy_at(x).ok_or_else(|| out_of_range(target))?;
    let den = ref_profile.energy_at(x).ok_or_else(|| out_of_range(ref_profile))?;
    if den.a2s() == T::zero() {
        return Err(CalibrateError::DegenerateProfile(ref_profile.category));
    }
    let predicted = reference.selected_energy.a2s() * (num.a2s() / den.a2s());
    Ok(finish(reference, target, predicted))
}

/// How the ratio between categories is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "x")]
pub enum PredictionMode {
    #[default]
    Mean,
    Matched(Option<LevelIndex>),
}

/// Predicts every category in `profiles` from the references the policy
/// names. Reference categories map to their own calibration.
pub fn predict_all<T: Scalar>(
    references: &[CalibrationPoint<T>],
    profiles: &ProfileSet<T>,
    policy: &GroupingPolicy,
    mode: PredictionMode,
) -> Result<BTreeMap<Category, PredictionResult<T>>, CalibrateError> {
    let mut out = BTreeMap::new();
    for category in profiles.categories() {
        let ref_cat = policy.reference_for(category);
        let reference = references
            .iter()
            .find(|p| p.category == ref_cat)
            .ok_or(CalibrateError::MissingReference(ref_cat))?;
        let target = profiles.get(category).ok_or(CalibrateError::MissingProfile(category))?;
        let ref_profile = profiles.get(ref_cat).ok_or(CalibrateError::MissingProfile(ref_cat))?;
        let result = if category == ref_cat {
            PredictionResult {
                category,
                reference_used: ref_cat,
                predicted_energy: reference.selected_energy,
                predicted_level: reference.selected_level,
            }
        } else {
            match mode {
                PredictionMode::Mean => predict_by_mean(reference, target, ref_profile)?,
                PredictionMode::Matched(x) => predict_by_matched_level(reference, target, ref_profile, x)?,
            }
        };
        out.insert(category, result);
    }
    Ok(out)
}

/// Coefficient of determination `1 − SS_res / SS_tot`, in percent.
///
/// `SS_tot` is taken about the mean of `selected`. Negative values are
/// returned unclamped.
pub fn r2_score<T: Scalar>(selected: &[T], predicted: &[T]) -> Result<T, CalibrateError> {
    if selected.len() != predicted.len() {
        return Err(CalibrateError::LengthMismatch(selected.len(), predicted.len()));
    }
    if selected.len() < 2 {
        return Err(CalibrateError::TooFewPoints(selected.len()));
    }
    let n = T::from_count(selected.len());
    let mean = selected.iter().copied().sum::<T>() / n;
    let ss_tot = selected.iter().fold(T::zero(), |acc, &y| acc + (y - mean) * (y - mean));
    if ss_tot == T::zero() {
        return Err(CalibrateError::UndefinedVariance);
    }
    let ss_res = selected
        .iter()
        .zip(predicted)
        .fold(T::zero(), |acc, (&y, &p)| acc + (y - p) * (y - p));
    Ok((T::one() - ss_res / ss_tot) * T::lit(100.0))
}

/// R² for one row or column of the score matrix, or why it is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Score<T> {
    Defined(T),
    Undefined(String),
}

impl<T: Scalar> Score<T> {
    pub fn value(&self) -> Option<T> {
        match self {
            Score::Defined(v) => Some(*v),
            Score::Undefined(_) => None,
        }
    }

    fn from_result(r: Result<T, CalibrateError>) -> Self {
        match r {
            Ok(v) => Score::Defined(v),
            Err(e) => Score::Undefined(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedParticipant {
    pub participant_id: String,
    pub reason: String,
}

/// Cohort-level R² tables: by participant and by category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix<T> {
    pub per_participant: BTreeMap<String, Score<T>>,
    pub per_category: BTreeMap<Category, Score<T>>,
    /// Mean of the defined per-participant scores, percent.
    pub participant_average: Option<T>,
    /// Mean of the defined per-category scores, percent.
    pub category_average: Option<T>,
    pub skipped: Vec<SkippedParticipant>,
    /// Per participant, the prediction for every category (references included).
    pub predictions: BTreeMap<String, BTreeMap<Category, PredictionResult<T>>>,
}

fn average<T: Scalar>(scores: impl Iterator<Item = Option<T>>) -> Option<T> {
    let vals: Vec<T> = scores.flatten().collect();
    (!vals.is_empty()).then(|| vals.iter().copied().sum::<T>() / T::from_count(vals.len()))
}

/// Scores predicted against selected energies across a cohort.
///
/// Reference categories of the policy are predicted (trivially) but left out
/// of every R² and average.
pub fn score_matrix<T: Scalar>(
    cohort: &[SessionRecord],
    profiles: &ProfileSet<T>,
    policy: &GroupingPolicy,
    mode: PredictionMode,
) -> ScoreMatrix<T> {
    let targets: Vec<Category> = profiles.categories().filter(|c| !policy.is_reference(*c)).collect();
    let mut per_participant = BTreeMap::new();
    let mut predictions = BTreeMap::new();
    let mut skipped = Vec::new();
    // category -> (selected, predicted) across participants
    let mut columns: BTreeMap<Category, (Vec<T>, Vec<T>)> = BTreeMap::new();

    for record in cohort {
        let points = match record_points(record, profiles) {
            Ok(p) => p,
            Err(reason) => {
                skipped.push(SkippedParticipant { participant_id: record.participant_id.clone(), reason });
                continue;
            }
        };
        let preds = match predict_all(&points, profiles, policy, mode) {
            Ok(p) => p,
            Err(e) => {
                skipped.push(SkippedParticipant {
                    participant_id: record.participant_id.clone(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let mut selected = Vec::with_capacity(targets.len());
        let mut predicted = Vec::with_capacity(targets.len());
        for &c in &targets {
            let s = points.iter().find(|p| p.category == c).map(|p| p.selected_energy.a2s());
            let (Some(s), Some(p)) = (s, preds.get(&c)) else { continue };
            selected.push(s);
            predicted.push(p.predicted_energy.a2s());
            let col = columns.entry(c).or_default();
            col.0.push(s);
            col.1.push(p.predicted_energy.a2s());
        }
        per_participant.insert(
            record.participant_id.clone(),
            Score::from_result(r2_score(&selected, &predicted)),
        );
        predictions.insert(record.participant_id.clone(), preds);
    }

    let per_category: BTreeMap<Category, Score<T>> = targets
        .iter()
        .map(|c| {
            let score = match columns.get(c) {
                Some((s, p)) => Score::from_result(r2_score(s, p)),
                None => Score::Undefined(CalibrateError::TooFewPoints(0).to_string()),
            };
            (*c, score)
        })
        .collect();

    ScoreMatrix {
        participant_average: average(per_participant.values().map(Score::value)),
        category_average: average(per_category.values().map(Score::value)),
        per_participant,
        per_category,
        skipped,
        predictions,
    }
}

fn record_points<T: Scalar>(record: &SessionRecord, profiles: &ProfileSet<T>) -> Result<Vec<CalibrationPoint<T>>, String> {
    let mut points = Vec::new();
    for c in profiles.categories() {
        let level = record
            .calibration
            .get(&c)
            .ok_or_else(|| format!("no calibration for {c}"))?;
        let profile = profiles.get(c).expect("category listed by the set");
        points.push(CalibrationPoint::from_profile(profile, *level).map_err(|e| e.to_string())?);
    }
    Ok(points)
}

fn write_score_table<W: Write, K: std::fmt::Display, T: Scalar>(
    mut w: W,
    key_header: &str,
    rows: impl Iterator<Item = (K, Score<T>)>,
    average: Option<T>,
) -> io::Result<()> {
    writeln!(w, "{key_header},r2_percent")?;
    for (k, s) in rows {
        match s {
            Score::Defined(v) => writeln!(w, "{k},{v:.3}")?,
            Score::Undefined(_) => writeln!(w, "{k},")?,
        }
    }
    match average {
        Some(v) => writeln!(w, "average,{v:.3}"),
        None => writeln!(w, "average,"),
    }
}

/// `participant_id,r2_percent` rows with a trailing average row.
pub fn write_participant_csv<T: Scalar, W: Write>(m: &ScoreMatrix<T>, w: W) -> io::Result<()> {
    write_score_table(w, "participant_id", m.per_participant.iter().map(|(k, s)| (k.clone(), s.clone())), m.participant_average)
}

/// `category,r2_percent` rows with a trailing average row.
pub fn write_category_csv<T: Scalar, W: Write>(m: &ScoreMatrix<T>, w: W) -> io::Result<()> {
    write_score_table(w, "category", m.per_category.iter().map(|(k, s)| (*k, s.clone())), m.category_average)
}

/// `category,reference,predicted_energy_A2s,predicted_level_index,predicted_amplitude_mA`.
pub fn write_predictions_csv<T: Scalar, W: Write>(
    predictions: &BTreeMap<Category, PredictionResult<T>>,
    profiles: &ProfileSet<T>,
    mut w: W,
) -> io::Result<()> {
    writeln!(w, "category,reference,predicted_energy_A2s,predicted_level_index,predicted_amplitude_mA")?;
    for (c, p) in predictions {
        let amp = profiles
            .get(*c)
            .and_then(|prof| prof.amplitude_at(p.predicted_level))
            .unwrap_or_else(T::nan);
        writeln!(
            w,
            "{c},{},{:e},{},{amp:.1}",
            p.reference_used,
            p.predicted_energy.a2s(),
            p.predicted_level
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signalgen::AmplitudeLadder;

    fn profiles() -> ProfileSet<f64> {
        ProfileSet::standard().unwrap()
    }

    fn point(set: &ProfileSet<f64>, c: Category, level: usize) -> CalibrationPoint<f64> {
        CalibrationPoint::from_profile(set.get(c).unwrap(), LevelIndex(level)).unwrap()
    }

    #[test]
    fn self_prediction_is_identity() {
        let set = profiles();
        for c in Category::ALL {
            let r = point(&set, c, 7);
            let p = predict_by_mean(&r, set.get(c).unwrap(), set.get(c).unwrap()).unwrap();
            assert_eq!(p.predicted_energy, r.selected_energy);
            assert_eq!(p.predicted_level, LevelIndex(7));
            let p = predict_by_matched_level(&r, set.get(c).unwrap(), set.get(c).unwrap(), Some(LevelIndex(20))).unwrap();
            assert_eq!(p.predicted_level, LevelIndex(7));
        }
    }

    #[test]
    fn tonic100_to_freq20_100_keeps_amplitude() {
        let set = profiles();
        let r = point(&set, Category::Tonic100, 5);
        let p = predict_by_mean(&r, set.get(Category::Freq20_100).unwrap(), set.get(Category::Tonic100).unwrap()).unwrap();
        assert_eq!(p.predicted_level, LevelIndex(5));
    }

    #[test]
    fn tonic100_to_tonic20() {
        let set = profiles();
        let r = point(&set, Category::Tonic100, 5);
        let p = predict_by_mean(&r, set.get(Category::Tonic20).unwrap(), set.get(Category::Tonic100).unwrap()).unwrap();
        assert!((p.predicted_energy.a2s() - 3.6e-8).abs() / 3.6e-8 < 1e-12);
        assert_eq!(p.predicted_level, LevelIndex(5));
    }

    #[test]
    fn tonic_pairs_matched_level_independent_of_x() {
        let set = profiles();
        let r = point(&set, Category::Tonic100, 9);
        let first = predict_by_matched_level(&r, set.get(Category::Tonic20).unwrap(), set.get(Category::Tonic100).unwrap(), Some(LevelIndex(0)))
            .unwrap()
            .predicted_energy
            .a2s();
        for x in 1..26 {
            let v = predict_by_matched_level(&r, set.get(Category::Tonic20).unwrap(), set.get(Category::Tonic100).unwrap(), Some(LevelIndex(x)))
                .unwrap()
                .predicted_energy
                .a2s();
            assert!((v - first).abs() / first < 1e-12);
        }
    }

    #[test]
    fn amp20_from_tonic20_matched() {
        let set = profiles();
        let r = point(&set, Category::Tonic20, 5);
        let p = predict_by_matched_level(&r, set.get(Category::Amp20).unwrap(), set.get(Category::Tonic20).unwrap(), None).unwrap();
        let amp = set.get(Category::Amp20).unwrap().energy_at(LevelIndex(5)).unwrap().a2s();
        let tonic = set.get(Category::Tonic20).unwrap().energy_at(LevelIndex(5)).unwrap().a2s();
        assert!((p.predicted_energy.a2s() - 3.6e-8 * amp / tonic).abs() < 1e-20);
        assert!((amp / tonic - 0.874).abs() < 0.005, "{}", amp / tonic);
        assert!((p.predicted_energy.a2s() - 3.15e-8).abs() / 3.15e-8 < 0.01);
    }

    #[test]
    fn degenerate_and_mismatched_profiles() {
        let zero = EnergyProfile::from_levels(Category::Tonic100, vec![1.0, 2.0], vec![EnergyValue(0.0), EnergyValue(0.0)]);
        let target = EnergyProfile::from_levels(Category::Tonic20, vec![1.0, 2.0], vec![EnergyValue(1.0), EnergyValue(2.0)]);
        let r = CalibrationPoint { category: Category::Tonic100, selected_level: LevelIndex(0), selected_energy: EnergyValue(1.0) };
        assert_eq!(predict_by_mean(&r, &target, &zero), Err(CalibrateError::DegenerateProfile(Category::Tonic100)));
        assert!(predict_by_matched_level(&r, &target, &zero, None).is_err());
        let other = EnergyProfile::from_levels(Category::Tonic100, vec![1.0, 3.0], vec![EnergyValue(1.0), EnergyValue(2.0)]);
        assert!(matches!(predict_by_mean(&r, &target, &other), Err(CalibrateError::LadderMismatch(..))));
        assert!(predict_by_matched_level(&r, &target, &other, Some(LevelIndex(2))).is_err());
    }

    #[test]
    fn predict_all_single_reference() {
        let set = profiles();
        let refs = [point(&set, Category::Tonic100, 5)];
        let out = predict_all(&refs, &set, &GroupingPolicy::single_reference(Category::Tonic100), PredictionMode::Mean).unwrap();
        assert_eq!(out.len(), 8);
        let identity: Vec<_> = out.values().filter(|p| p.category == p.reference_used).collect();
        assert_eq!(identity.len(), 1);
        assert_eq!(out[&Category::Tonic100].predicted_level, LevelIndex(5));
    }

    #[test]
    fn predict_all_frequency_bands() {
        let set = profiles();
        let policy = GroupingPolicy::frequency_bands();
        assert_eq!(policy.references(), vec![Category::Tonic20, Category::Tonic100]);
        let only_100 = [point(&set, Category::Tonic100, 5)];
        assert_eq!(
            predict_all(&only_100, &set, &policy, PredictionMode::Mean),
            Err(CalibrateError::MissingReference(Category::Tonic20))
        );
        let refs = [point(&set, Category::Tonic100, 5), point(&set, Category::Tonic20, 8)];
        let out = predict_all(&refs, &set, &policy, PredictionMode::Mean).unwrap();
        assert_eq!(out[&Category::Amp20].reference_used, Category::Tonic20);
        assert_eq!(out[&Category::Amp100].reference_used, Category::Tonic100);
        assert_eq!(out[&Category::Tonic20].predicted_level, LevelIndex(8));
    }

    #[test]
    fn r2_examples() {
        assert_eq!(r2_score(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 100.0);
        assert!((r2_score::<f64>(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap() - 50.0).abs() < 1e-12);
        assert!(r2_score(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() < 0.0);
        assert_eq!(r2_score(&[2.0, 2.0], &[1.0, 2.0]), Err(CalibrateError::UndefinedVariance));
        assert_eq!(r2_score(&[2.0], &[2.0]), Err(CalibrateError::TooFewPoints(1)));
        assert_eq!(r2_score(&[2.0, 1.0], &[2.0]), Err(CalibrateError::LengthMismatch(2, 1)));
    }

    #[test]
    fn generic_over_f32() {
        let set = ProfileSet::<f32>::build(&AmplitudeLadder::standard()).unwrap();
        let r = CalibrationPoint::from_profile(set.get(Category::Tonic100).unwrap(), LevelIndex(5)).unwrap();
        let p = predict_by_mean(&r, set.get(Category::Freq40_170).unwrap(), set.get(Category::Tonic100).unwrap()).unwrap();
        assert_eq!(p.predicted_level, LevelIndex(5));
    }
}
