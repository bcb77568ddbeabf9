use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::DeviceError;
use crate::signalgen::MAX_AMPLITUDE_MA;

/// Highest code of the 8-bit amplitude DAC.
pub const DAC_MAX_CODE: u16 = 255;

/// Monotone map from DAC command codes to output current (mA).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DacLut {
    entries: Vec<(u16, f64)>,
}

/// Result of asking the DAC for a particular current.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub requested_ma: f64,
    pub code: u16,
    pub output_ma: f64,
    /// `|output − requested|`, mA.
    pub error_ma: f64,
}

impl Realization {
    pub fn is_exact(&self) -> bool {
        self.error_ma == 0.0
    }
}

impl DacLut {
    /// Entries must be strictly increasing in both code and current, start at
    /// 0 mA and reach at least 3.0 mA.
    pub fn new(entries: impl IntoIterator<Item = (u16, f64)>) -> Result<Self, DeviceError> {
        let entries: Vec<(u16, f64)> = entries.into_iter().collect();
        let bad = |m: &str| Err(DeviceError::InvalidLut(m.to_string()));
        if entries.len() < 2 {
            return bad("need at least two entries");
        }
        if entries.iter().any(|e| !e.1.is_finite()) {
            return bad("non-finite current");
        }
        if entries.windows(2).any(|w| !(w[0].0 < w[1].0 && w[0].1 < w[1].1)) {
            return bad("codes and currents must be strictly increasing");
        }
        if entries[0].1 != 0.0 {
            return bad("first entry must be 0 mA");
        }
        if entries[entries.len() - 1].1 < MAX_AMPLITUDE_MA {
            return bad("table must reach 3.0 mA");
        }
        Ok(Self { entries })
    }

    /// 256 codes with `I = 3.0 · (code / 255)^1.1` mA.
    pub fn default_table() -> Self {
        let n = f64::from(DAC_MAX_CODE);
        let entries = (0..=DAC_MAX_CODE)
            .map(|c| (c, MAX_AMPLITUDE_MA * (f64::from(c) / n).powf(1.1)))
            .collect::<Vec<_>>();
        Self::new(entries).expect("default table is monotone")
    }

    /// Evenly spaced codes `0, step, 2·step, …` up to 3.0 mA.
    pub fn linear(step_ma: f64) -> Result<Self, DeviceError> {
        if !(step_ma > 0.0) {
            return Err(DeviceError::InvalidLut("step must be > 0".into()));
        }
        let n = (MAX_AMPLITUDE_MA / step_ma - 1e-9).ceil() as u16;
        Self::new((0..=n).map(|c| (c, f64::from(c) * step_ma)))
    }

    pub fn entries(&self) -> &[(u16, f64)] {
        &self.entries
    }

    pub fn max_code(&self) -> u16 {
        self.entries[self.entries.len() - 1].0
    }

    /// Output current for an exact code in the table.
    pub fn current(&self, code: u16) -> Option<f64> {
        self.entries
            .binary_search_by_key(&code, |e| e.0)
            .ok()
            .map(|i| self.entries[i].1)
    }

    /// Largest gap between adjacent currents, mA.
    pub fn max_step_ma(&self) -> f64 {
        self.entries.windows(2).map(|w| w[1].1 - w[0].1).fold(0.0, f64::max)
    }

    /// Nearest code to `amplitude_ma`; ties go to the lower code.
    pub fn nearest(&self, amplitude_ma: f64) -> Realization {
        let i = self.entries.partition_point(|e| e.1 < amplitude_ma);
        let pick = if i == 0 {
            0
        } else if i == self.entries.len() {
            i - 1
        } else {
            let below = amplitude_ma - self.entries[i - 1].1;
            let above = self.entries[i].1 - amplitude_ma;
            if above < below {
                i
            } else {
                i - 1
            }
        };
        let (code, output_ma) = self.entries[pick];
        Realization {
            requested_ma: amplitude_ma,
            code,
            output_ma,
            error_ma: (output_ma - amplitude_ma).abs(),
        }
    }

    /// Fractional code for `amplitude_ma`, interpolated linearly between
    /// table entries. For display only.
    pub fn interpolated_code(&self, amplitude_ma: f64) -> f64 {
        let i = self.entries.partition_point(|e| e.1 < amplitude_ma);
        if i == 0 {
            return f64::from(self.entries[0].0);
        }
        if i == self.entries.len() {
            return f64::from(self.max_code());
        }
        let (c0, a0) = self.entries[i - 1];
        let (c1, a1) = self.entries[i];
        f64::from(c0) + (amplitude_ma - a0) / (a1 - a0) * (f64::from(c1) - f64::from(c0))
    }

    /// Reads `code,current_mA` rows; a header line and `#` comments are skipped.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, DeviceError> {
        let mut entries = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| DeviceError::InvalidLut(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (n == 0 && line.starts_with("code")) {
                continue;
            }
            let parse_err = || DeviceError::InvalidLut(format!("line {}: expected `code,current_mA`", n + 1));
            let (c, a) = line.split_once(',').ok_or_else(parse_err)?;
            let code: u16 = c.trim().parse().map_err(|_| parse_err())?;
            let ma: f64 = a.trim().parse().map_err(|_| parse_err())?;
            entries.push((code, ma));
        }
        Self::new(entries)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "code,current_mA")?;
        for (c, a) in &self.entries {
            writeln!(w, "{c},{a}")?;
        }
        Ok(())
    }
}

impl Default for DacLut {
    fn default() -> Self {
        Self::default_table()
    }
}

/// How well the DAC can produce `amplitude_ma`. Amplitudes outside
/// `(0, 3.0]` mA are rejected.
pub fn can_realize(amplitude_ma: f64, lut: &DacLut) -> Result<Realization, DeviceError> {
    if !(amplitude_ma > 0.0 && amplitude_ma <= MAX_AMPLITUDE_MA) {
        return Err(DeviceError::Validation {
            field: "amplitude",
            reason: format!("{amplitude_ma} mA outside (0, 3.0] mA"),
        });
    }
    Ok(lut.nearest(amplitude_ma))
}
