use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SignalError;

/// The eight stimulation categories.
///
/// Declaration order is the canonical order used for maps, reports and
/// schedules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "tonic20")]
    Tonic20,
    #[serde(rename = "tonic100")]
    Tonic100,
    #[serde(rename = "amp20")]
    Amp20,
    #[serde(rename = "amp100")]
    Amp100,
    #[serde(rename = "freq20_100")]
    Freq20_100,
    #[serde(rename = "freq40_170")]
    Freq40_170,
    #[serde(rename = "both20_100")]
    Both20_100,
    #[serde(rename = "both40_170")]
    Both40_170,
}

/// Frequency group used when choosing a same-band tonic reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyBand {
    /// Categories that stay at 20 Hz throughout.
    Low,
    /// Categories that reach 100 Hz or more.
    High,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::Tonic20,
        Category::Tonic100,
        Category::Amp20,
        Category::Amp100,
        Category::Freq20_100,
        Category::Freq40_170,
        Category::Both20_100,
        Category::Both40_170,
    ];

    /// Machine key used in JSON, CSV and on the command line.
    pub fn key(self) -> &'static str {
        match self {
            Category::Tonic20 => "tonic20",
            Category::Tonic100 => "tonic100",
            Category::Amp20 => "amp20",
            Category::Amp100 => "amp100",
            Category::Freq20_100 => "freq20_100",
            Category::Freq40_170 => "freq40_170",
            Category::Both20_100 => "both20_100",
            Category::Both40_170 => "both40_170",
        }
    }

    /// Human readable name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Category::Tonic20 => "Tonic 20 Hz",
            Category::Tonic100 => "Tonic 100 Hz",
            Category::Amp20 => "Amp 20 Hz",
            Category::Amp100 => "Amp 100 Hz",
            Category::Freq20_100 => "Freq 20-100 Hz",
            Category::Freq40_170 => "Freq 40-170 Hz",
            Category::Both20_100 => "Both 20-100 Hz",
            Category::Both40_170 => "Both 40-170 Hz",
        }
    }

    /// `(start, peak)` pulse rate in Hz. Equal values mean a constant rate.
    pub fn frequency_range_hz(self) -> (u32, u32) {
        match self {
            Category::Tonic20 | Category::Amp20 => (20, 20),
            Category::Tonic100 | Category::Amp100 => (100, 100),
            Category::Freq20_100 | Category::Both20_100 => (20, 100),
            Category::Freq40_170 | Category::Both40_170 => (40, 170),
        }
    }

    pub fn amplitude_modulated(self) -> bool {
        matches!(
            self,
            Category::Amp20 | Category::Amp100 | Category::Both20_100 | Category::Both40_170
        )
    }

    pub fn frequency_modulated(self) -> bool {
        matches!(
            self,
            Category::Freq20_100 | Category::Freq40_170 | Category::Both20_100 | Category::Both40_170
        )
    }

    pub fn is_tonic(self) -> bool {
        matches!(self, Category::Tonic20 | Category::Tonic100)
    }

    pub fn band(self) -> FrequencyBand {
        if self.frequency_range_hz().1 >= 100 {
            FrequencyBand::High
        } else {
            FrequencyBand::Low
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Category {
    type Err = SignalError;

    /// Accepts the machine key (`freq20_100`) or the report label
    /// (`Freq 20-100 Hz`), case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .trim_end_matches("hz")
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| if c == '-' { '_' } else { c })
            .collect();
        Category::ALL
            .into_iter()
            .find(|c| c.key() == norm)
            .ok_or_else(|| SignalError::UnknownCategory(s.to_string()))
    }
}
