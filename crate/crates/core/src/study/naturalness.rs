//! Naturalness statistics: mean, median, interquartile range and ranking.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::session::{Phase, SessionRecord, MAX_RATING};
use super::StudyError;
use crate::signalgen::{Category, FrequencyBand};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub category: Category,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    /// 1 = most natural.
    pub rank: usize,
}

/// Per-category statistics, sorted by rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaturalnessSummary {
    pub rows: Vec<CategoryStats>,
}

impl NaturalnessSummary {
    pub fn get(&self, category: Category) -> Option<&CategoryStats> {
        self.rows.iter().find(|r| r.category == category)
    }

    pub fn ranking(&self) -> Vec<Category> {
        self.rows.iter().map(|r| r.category).collect()
    }
}

/// Quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Aggregates every rating of every completed record.
///
/// Ranks order categories by descending mean, then descending median, then
/// category key.
pub fn summarize_naturalness(records: &[SessionRecord]) -> Result<NaturalnessSummary, StudyError> {
    if records.is_empty() {
        return Err(StudyError::EmptyCohort);
    }
    let mut by_cat: BTreeMap<Category, Vec<f64>> = BTreeMap::new();
    for r in records {
        if r.phase != Phase::Done {
            return Err(StudyError::NotDone(r.participant_id.clone()));
        }
        for t in &r.trials {
            by_cat.entry(t.category).or_default().push(f64::from(t.rating));
        }
    }
    let mut rows: Vec<CategoryStats> = by_cat
        .into_iter()
        .map(|(category, mut xs)| {
            xs.sort_by(f64::total_cmp);
            let n = xs.len();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let (q1, median, q3) = (quantile(&xs, 0.25), quantile(&xs, 0.5), quantile(&xs, 0.75));
            CategoryStats { category, n, mean, median, q1, q3, iqr: q3 - q1, rank: 0 }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.mean
            .partial_cmp(&a.mean)
            .unwrap_or(Ordering::Equal)
            .then(b.median.partial_cmp(&a.median).unwrap_or(Ordering::Equal))
            .then(a.category.key().cmp(b.category.key()))
    });
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(NaturalnessSummary { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub category: Category,
    pub baseline: Category,
    /// Difference of means as a share of the rating scale, percent.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementReport {
    pub best: Category,
    pub worst: Category,
    pub best_vs_worst_percent: f64,
    /// Each modulated category against the tonic category of its band.
    pub modulated_vs_tonic: Vec<Delta>,
}

impl ImprovementReport {
    pub fn delta(&self, category: Category) -> Option<f64> {
        self.modulated_vs_tonic
            .iter()
            .find(|d| d.category == category)
            .map(|d| d.percent)
    }
}

fn scale_percent(a: f64, b: f64) -> f64 {
    (a - b) / f64::from(MAX_RATING) * 100.0
}

/// Mean differences expressed on the 0–5 scale.
pub fn improvement_report(summary: &NaturalnessSummary) -> Result<ImprovementReport, StudyError> {
    let best = summary.rows.first().ok_or(StudyError::EmptyCohort)?;
    let worst = summary.rows.last().ok_or(StudyError::EmptyCohort)?;
    let modulated_vs_tonic = summary
        .rows
        .iter()
        .filter(|r| !r.category.is_tonic())
        .filter_map(|r| {
            let baseline = match r.category.band() {
                FrequencyBand::Low => Category::Tonic20,
                FrequencyBand::High => Category::Tonic100,
            };
            summary.get(baseline).map(|b| Delta {
                category: r.category,
                baseline,
                percent: scale_percent(r.mean, b.mean),
            })
        })
        .collect();
    Ok(ImprovementReport {
        best: best.category,
        worst: worst.category,
        best_vs_worst_percent: scale_percent(best.mean, worst.mean),
        modulated_vs_tonic,
    })
}

/// `rank,stimulation,mean_score`.
pub fn write_summary_csv<W: Write>(summary: &NaturalnessSummary, mut w: W) -> io::Result<()> {
    writeln!(w, "rank,stimulation,mean_score")?;
    for r in &summary.rows {
        writeln!(w, "{},{},{:.2}", r.rank, r.category.label(), r.mean)?;
    }
    Ok(())
}

/// `category,n,mean,median,q1,q3,iqr,rank`.
pub fn write_stats_csv<W: Write>(summary: &NaturalnessSummary, mut w: W) -> io::Result<()> {
    writeln!(w, "category,n,mean,median,q1,q3,iqr,rank")?;
    for r in &summary.rows {
        writeln!(
            w,
            "{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{}",
            r.category, r.n, r.mean, r.median, r.q1, r.q3, r.iqr, r.rank
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::study::fixtures::{reference_cohort, REFERENCE_MEANS};
    use crate::study::session::Trial;
    use crate::LevelIndex;

    fn done_with(mut ratings: impl FnMut(usize, Category) -> u8) -> SessionRecord {
        let mut r = SessionRecord::new("p", 5);
        for c in Category::ALL {
            r.calibration.insert(c, LevelIndex(0));
        }
        for (k, c) in r.schedule().into_iter().enumerate() {
            r.trials.push(Trial { index: k as u32 + 1, category: c, rating: ratings(k, c) });
        }
        r.phase = Phase::Done;
        r
    }

    #[test]
    fn single_category_arithmetic() {
        let mut seen = 0;
        let r = done_with(|_, c| {
            if c == Category::Tonic20 {
                seen += 1;
                [2, 3, 2][(seen - 1) % 3]
            } else {
                1
            }
        });
        let s = summarize_naturalness(&[r]).unwrap();
        let t = s.get(Category::Tonic20).unwrap();
        assert!((t.mean - 7.0 / 3.0).abs() < 1e-12);
        assert_eq!(t.median, 2.0);
        assert_eq!(t.n, 3);
    }

    #[test]
    fn ties_resolved_by_key() {
        let s = summarize_naturalness(&[done_with(|_, _| 3)]).unwrap();
        let mut keys: Vec<_> = Category::ALL.iter().map(|c| c.key()).collect();
        keys.sort();
        assert_eq!(s.rows.iter().map(|r| r.category.key()).collect::<Vec<_>>(), keys);
        assert_eq!(s.rows.iter().map(|r| r.rank).collect::<Vec<_>>(), (1..=8).collect::<Vec<_>>());
    }

    #[test]
    fn errors() {
        assert_eq!(summarize_naturalness(&[]), Err(StudyError::EmptyCohort));
        assert!(matches!(
            summarize_naturalness(&[SessionRecord::new("a", 1)]),
            Err(StudyError::NotDone(_))
        ));
    }

    #[test]
    fn fixture_ranking_and_report() {
        let s = summarize_naturalness(&reference_cohort()).unwrap();
        let expected: Vec<_> = REFERENCE_MEANS.iter().map(|(c, _)| *c).collect();
        assert_eq!(s.ranking(), expected);
        for (c, m) in REFERENCE_MEANS {
            assert!((s.get(c).unwrap().mean - m).abs() < 1e-12);
        }
        let rep = improvement_report(&s).unwrap();
        assert!((rep.best_vs_worst_percent - 6.8).abs() < 1e-9);
        assert!((rep.delta(Category::Amp100).unwrap() - 2.6).abs() < 1e-9);
        assert!((rep.delta(Category::Amp20).unwrap() - 5.8).abs() < 1e-9);
    }

    #[test]
    fn summary_csv() {
        let s = summarize_naturalness(&reference_cohort()).unwrap();
        let mut out = Vec::new();
        write_summary_csv(&s, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[1], "1,Freq 40-170 Hz,2.59");
        assert_eq!(lines[8], "8,Tonic 20 Hz,2.25");
    }

    #[test]
    fn quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.5), 2.5);
        assert_eq!(quantile(&xs, 0.25), 1.75);
        assert_eq!(quantile(&[4.0], 0.75), 4.0);
    }
}
