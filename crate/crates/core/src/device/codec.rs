//! Fixed-length little-endian command frames.
//!
//! This layout is a stand-in. The real stimulator firmware's command format
//! has not been published.
//!
//! ```text
//! off len field
//!   0   2 magic 0xE7AC
//!   2   1 version 0x01
//!   3   1 opcode (01 stimulate, 02 stop, 03 set-channels, 04 ping)
//!   4   1 waveform mode
//!   5   2 freq_start Hz
//!   7   2 freq_end Hz
//!   9   2 ramp_up ms
//!  11   2 hold ms
//!  13   2 ramp_down ms
//!  15   2 positive width µs
//!  17   2 negative width µs
//!  19   2 amp_start DAC code
//!  21   2 amp_end DAC code
//!  23   4 channel states, 2 bits per channel
//!  27   2 duration ms
//!  29   2 CRC-16/CCITT-FALSE over bytes 0..29
//! ```
//!
//! Envelope fields with `start == end` describe a constant parameter.
//! Non-stimulate frames must carry zeros in every field they do not use.

use crc::{Crc, CRC_16_IBM_3740};
use serde::{Deserialize, Serialize};

use super::channels::ChannelConfig;
use super::lut::{DacLut, DAC_MAX_CODE};
use super::DeviceError;
use crate::signalgen::{PatternSpec, Polarity, MAX_AMPLITUDE_MA, PULSE_WIDTH_RANGE_US};

pub const MAGIC: u16 = 0xE7AC;
pub const VERSION: u8 = 0x01;
pub const FRAME_LEN: usize = 31;
pub const FREQUENCY_RANGE_HZ: (u16, u16) = (1, 50_000);

const CRC16: Crc<u16> = Crc::<u16>::new(&CRC_16_IBM_3740);

pub fn crc16(bytes: &[u8]) -> u16 {
    CRC16.checksum(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Opcode {
    Stimulate = 0x01,
    Stop = 0x02,
    SetChannels = 0x03,
    Ping = 0x04,
}

impl Opcode {
    fn from_byte(b: u8) -> Result<Self, DeviceError> {
        match b {
            0x01 => Ok(Opcode::Stimulate),
            0x02 => Ok(Opcode::Stop),
            0x03 => Ok(Opcode::SetChannels),
            0x04 => Ok(Opcode::Ping),
            other => Err(DeviceError::UnknownOpcode(other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum WaveformMode {
    #[default]
    Biphasic = 0x01,
    BiphasicNegativeFirst = 0x02,
    Monophasic = 0x03,
}

impl WaveformMode {
    fn from_byte(b: u8) -> Result<Self, DeviceError> {
        match b {
            0x01 => Ok(WaveformMode::Biphasic),
            0x02 => Ok(WaveformMode::BiphasicNegativeFirst),
            0x03 => Ok(WaveformMode::Monophasic),
            other => Err(DeviceError::Validation { field: "mode", reason: format!("unknown waveform mode {other:#04x}") }),
        }
    }

    pub fn polarity(self) -> Polarity {
        match self {
            WaveformMode::Biphasic => Polarity::PositiveFirst,
            WaveformMode::BiphasicNegativeFirst => Polarity::NegativeFirst,
            WaveformMode::Monophasic => Polarity::Monophasic,
        }
    }
}

/// Parameters of one stimulation as the device receives them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StimCommand {
    pub mode: WaveformMode,
    pub freq_start_hz: u16,
    pub freq_end_hz: u16,
    pub ramp_up_ms: u16,
    pub hold_ms: u16,
    pub ramp_down_ms: u16,
    pub positive_width_us: u16,
    pub negative_width_us: u16,
    pub amp_start_code: u16,
    pub amp_end_code: u16,
    pub channels: ChannelConfig,
    pub duration_ms: u16,
}

fn invalid(field: &'static str, reason: String) -> DeviceError {
    DeviceError::Validation { field, reason }
}

impl StimCommand {
    /// Checks every field against the stimulator limits.
    pub fn validate(&self) -> Result<(), DeviceError> {
        let (fmin, fmax) = FREQUENCY_RANGE_HZ;
        for (field, f) in [("freq_start", self.freq_start_hz), ("freq_end", self.freq_end_hz)] {
            if !(fmin..=fmax).contains(&f) {
                return Err(invalid(field, format!("{f} Hz outside [{fmin}, {fmax}] Hz")));
            }
        }
        if self.freq_start_hz > self.freq_end_hz {
            return Err(invalid("freq_end", "freq_end below freq_start".into()));
        }
        let (wmin, wmax) = PULSE_WIDTH_RANGE_US;
        for (field, w) in [("positive_width", self.positive_width_us), ("negative_width", self.negative_width_us)] {
            if !(wmin..=wmax).contains(&u32::from(w)) {
                return Err(invalid(field, format!("{w} us outside [{wmin}, {wmax}] us")));
            }
        }
        for (field, c) in [("amp_start", self.amp_start_code), ("amp_end", self.amp_end_code)] {
            if !(1..=DAC_MAX_CODE).contains(&c) {
                return Err(invalid(field, format!("code {c} outside [1, {DAC_MAX_CODE}]")));
            }
        }
        if self.amp_start_code > self.amp_end_code {
            return Err(invalid("amp_end", "amp_end below amp_start".into()));
        }
        let sum = u32::from(self.ramp_up_ms) + u32::from(self.hold_ms) + u32::from(self.ramp_down_ms);
        if self.duration_ms == 0 {
            return Err(invalid("duration", "duration must be > 0".into()));
        }
        if sum != u32::from(self.duration_ms) {
            return Err(invalid("duration", format!("ramp_up + hold + ramp_down = {sum} ms != duration {} ms", self.duration_ms)));
        }
        Ok(())
    }

    /// Device command for a pattern, amplitudes quantized to the nearest
    /// DAC code.
    pub fn from_pattern(spec: &PatternSpec<f64>, lut: &DacLut, channels: ChannelConfig) -> Result<Self, DeviceError> {
        if !(spec.amplitude_ma > 0.0 && spec.amplitude_ma <= MAX_AMPLITUDE_MA) {
            return Err(invalid("amplitude", format!("{} mA outside (0, 3.0] mA", spec.amplitude_ma)));
        }
        let wf = spec.waveform().map_err(|e| invalid("amplitude", e.to_string()))?;
        let ms = |s: f64| -> Result<u16, DeviceError> {
            let v = (s * 1000.0).round();
            if (0.0..=f64::from(u16::MAX)).contains(&v) {
                Ok(v as u16)
            } else {
                Err(invalid("duration", format!("{s} s not representable in ms")))
            }
        };
        let hz = |f: f64| f.round().clamp(0.0, f64::from(u16::MAX)) as u16;
        let width = |w: u32| u16::try_from(w).unwrap_or(u16::MAX);
        let cmd = Self {
            mode: WaveformMode::Biphasic,
            freq_start_hz: hz(wf.frequency.low),
            freq_end_hz: hz(wf.frequency.high),
            ramp_up_ms: ms(spec.timing.ramp_up)?,
            hold_ms: ms(spec.timing.hold)?,
            ramp_down_ms: ms(spec.timing.ramp_down)?,
            positive_width_us: width(spec.pulse.positive_width_us),
            negative_width_us: width(spec.pulse.negative_width_us),
            amp_start_code: lut.nearest(wf.amplitude.low).code,
            amp_end_code: lut.nearest(wf.amplitude.high).code,
            channels,
            duration_ms: ms(spec.duration())?,
        };
        cmd.validate()?;
        Ok(cmd)
    }
}

/// Everything a frame can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", content = "params", rename_all = "snake_case")]
pub enum Command {
    Stimulate(StimCommand),
    Stop,
    SetChannels(ChannelConfig),
    Ping,
}

impl Command {
    pub fn opcode(&self) -> Opcode {
        match self {
            Command::Stimulate(_) => Opcode::Stimulate,
            Command::Stop => Opcode::Stop,
            Command::SetChannels(_) => Opcode::SetChannels,
            Command::Ping => Opcode::Ping,
        }
    }
}

/// Serializes a command into its 31-byte frame.
pub fn encode(cmd: &Command) -> Result<[u8; FRAME_LEN], DeviceError> {
    let mut f = [0u8; FRAME_LEN];
    f[0..2].copy_from_slice(&MAGIC.to_le_bytes());
    f[2] = VERSION;
    f[3] = cmd.opcode() as u8;
    match cmd {
        Command::Stimulate(s) => {
            s.validate()?;
            f[4] = s.mode as u8;
            let fields = [
                s.freq_start_hz,
                s.freq_end_hz,
                s.ramp_up_ms,
                s.hold_ms,
                s.ramp_down_ms,
                s.positive_width_us,
                s.negative_width_us,
                s.amp_start_code,
                s.amp_end_code,
            ];
            for (i, v) in fields.iter().enumerate() {
                f[5 + 2 * i..7 + 2 * i].copy_from_slice(&v.to_le_bytes());
            }
            f[23..27].copy_from_slice(&s.channels.pack().to_le_bytes());
            f[27..29].copy_from_slice(&s.duration_ms.to_le_bytes());
        }
        Command::SetChannels(c) => f[23..27].copy_from_slice(&c.pack().to_le_bytes()),
        Command::Stop | Command::Ping => {}
    }
    let crc = crc16(&f[..FRAME_LEN - 2]);
    f[FRAME_LEN - 2..].copy_from_slice(&crc.to_le_bytes());
    Ok(f)
}

fn u16_at(f: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([f[off], f[off + 1]])
}

/// Parses and validates a frame.
pub fn decode(frame: &[u8]) -> Result<Command, DeviceError> {
    if frame.len() != FRAME_LEN {
        return Err(DeviceError::Length { expected: FRAME_LEN, got: frame.len() });
    }
    let magic = u16_at(frame, 0);
    if magic != MAGIC {
        return Err(DeviceError::BadMagic(magic));
    }
    if frame[2] != VERSION {
        return Err(DeviceError::UnsupportedVersion(frame[2]));
    }
    let stored = u16_at(frame, FRAME_LEN - 2);
    let computed = crc16(&frame[..FRAME_LEN - 2]);
    if stored != computed {
        return Err(DeviceError::Checksum { stored, computed });
    }
    let opcode = Opcode::from_byte(frame[3])?;
    let channels_word = u32::from_le_bytes([frame[23], frame[24], frame[25], frame[26]]);
    let require_zero = |range: std::ops::Range<usize>, what: &'static str| {
        if frame[range].iter().all(|&b| b == 0) {
            Ok(())
        } else {
            Err(invalid(what, format!("unused field must be zero for {opcode:?}")))
        }
    };
    match opcode {
        Opcode::Stimulate => {
            let cmd = StimCommand {
                mode: WaveformMode::from_byte(frame[4])?,
                freq_start_hz: u16_at(frame, 5),
                freq_end_hz: u16_at(frame, 7),
                ramp_up_ms: u16_at(frame, 9),
                hold_ms: u16_at(frame, 11),
                ramp_down_ms: u16_at(frame, 13),
                positive_width_us: u16_at(frame, 15),
                negative_width_us: u16_at(frame, 17),
                amp_start_code: u16_at(frame, 19),
                amp_end_code: u16_at(frame, 21),
                channels: ChannelConfig::unpack(channels_word)?,
                duration_ms: u16_at(frame, 27),
            };
            cmd.validate()?;
            Ok(Command::Stimulate(cmd))
        }
        Opcode::SetChannels => {
            require_zero(4..23, "params")?;
            require_zero(27..29, "duration")?;
            Ok(Command::SetChannels(ChannelConfig::unpack(channels_word)?))
        }
        Opcode::Stop | Opcode::Ping => {
            require_zero(4..29, "params")?;
            Ok(if opcode == Opcode::Stop { Command::Stop } else { Command::Ping })
        }
    }
}

pub fn to_hex(frame: &[u8]) -> String {
    hex::encode(frame)
}

pub fn from_hex(line: &str) -> Result<Vec<u8>, DeviceError> {
    let cleaned: String = line.chars().filter(|c| !c.is_whitespace()).collect();
    hex::decode(cleaned).map_err(|e| DeviceError::Hex(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signalgen::Category;

    fn tonic100() -> StimCommand {
        let spec = PatternSpec::new(Category::Tonic100, 1.0);
        StimCommand::from_pattern(&spec, &DacLut::default(), ChannelConfig::experiment_default()).unwrap()
    }

    #[test]
    fn crc_check_value() {
        assert_eq!(crc16(b"123456789"), 0x29B1);
    }

    #[test]
    fn tonic100_frame_fields() {
        let cmd = tonic100();
        assert_eq!(cmd.freq_start_hz, 100);
        assert_eq!(cmd.freq_end_hz, 100);
        assert_eq!(cmd.duration_ms, 3000);
        assert_eq!(cmd.amp_start_code, cmd.amp_end_code);
        let lut = DacLut::default();
        assert_eq!(cmd.amp_end_code, lut.nearest(1.0).code);
        let f = encode(&Command::Stimulate(cmd)).unwrap();
        assert_eq!(&f[0..4], &[0xAC, 0xE7, 0x01, 0x01]);
        assert_eq!(u16_at(&f, 5), 100);
        assert_eq!(decode(&f).unwrap(), Command::Stimulate(cmd));
    }

    #[test]
    fn amplitude_over_limit() {
        let spec = PatternSpec::new(Category::Tonic100, 3.1);
        let err = StimCommand::from_pattern(&spec, &DacLut::default(), ChannelConfig::experiment_default()).unwrap_err();
        assert!(matches!(err, DeviceError::Validation { field: "amplitude", .. }));
    }

    #[test]
    fn parse_errors_are_distinct() {
        let f = encode(&Command::Stimulate(tonic100())).unwrap();
        let mut bad = f;
        bad[FRAME_LEN - 1] ^= 0xFF;
        assert!(matches!(decode(&bad), Err(DeviceError::Checksum { .. })));
        assert!(matches!(decode(&f[..20]), Err(DeviceError::Length { expected: 31, got: 20 })));
        let mut bad = f;
        bad[0] = 0;
        assert!(matches!(decode(&bad), Err(DeviceError::BadMagic(_))));
        let mut bad = f;
        bad[2] = 9;
        assert!(matches!(decode(&bad), Err(DeviceError::UnsupportedVersion(9))));
    }

    #[test]
    fn out_of_range_field_after_valid_crc() {
        let mut f = encode(&Command::Stimulate(tonic100())).unwrap();
        f[15..17].copy_from_slice(&2000u16.to_le_bytes());
        let crc = crc16(&f[..29]);
        f[29..31].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(decode(&f), Err(DeviceError::Validation { field: "positive_width", .. })));
    }

    #[test]
    fn control_frames() {
        for cmd in [Command::Stop, Command::Ping, Command::SetChannels(ChannelConfig::experiment_default())] {
            assert_eq!(decode(&encode(&cmd).unwrap()).unwrap(), cmd);
        }
        let mut f = encode(&Command::Ping).unwrap();
        f[10] = 1;
        let crc = crc16(&f[..29]);
        f[29..31].copy_from_slice(&crc.to_le_bytes());
        assert!(decode(&f).is_err());
    }

    #[test]
    fn hex_helpers() {
        let f = encode(&Command::Ping).unwrap();
        let h = to_hex(&f);
        assert_eq!(h.len(), 62);
        assert_eq!(from_hex(&format!(" {h} \n")).unwrap(), f.to_vec());
        assert!(from_hex("zz").is_err());
    }
}
