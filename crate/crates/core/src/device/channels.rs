use serde::{Deserialize, Serialize};

use super::DeviceError;

pub const CHANNEL_COUNT: usize = 15;

/// Switch state of one electrode channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelState {
    #[default]
    NoConnection,
    Source,
    Sink,
    Ground,
}

impl ChannelState {
    pub fn bits(self) -> u32 {
        match self {
            ChannelState::NoConnection => 0b00,
            ChannelState::Source => 0b01,
            ChannelState::Sink => 0b10,
            ChannelState::Ground => 0b11,
        }
    }

    pub fn from_bits(bits: u32) -> Self {
        match bits & 0b11 {
            0b00 => ChannelState::NoConnection,
            0b01 => ChannelState::Source,
            0b10 => ChannelState::Sink,
            _ => ChannelState::Ground,
        }
    }
}

/// States of all 15 channels. One state per channel by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ChannelConfig(pub [ChannelState; CHANNEL_COUNT]);

impl ChannelConfig {
    /// Everything disconnected.
    pub fn idle() -> Self {
        Self::default()
    }

    /// Centre pad (channel 0) sources, ring pad (channel 1) sinks.
    pub fn experiment_default() -> Self {
        let mut c = Self::idle();
        c.0[0] = ChannelState::Source;
        c.0[1] = ChannelState::Sink;
        c
    }

    pub fn set(&mut self, channel: usize, state: ChannelState) -> Result<(), DeviceError> {
        let slot = self.0.get_mut(channel).ok_or(DeviceError::Validation {
            field: "channel",
            reason: format!("channel {channel} out of range 0..{CHANNEL_COUNT}"),
        })?;
        *slot = state;
        Ok(())
    }

    pub fn get(&self, channel: usize) -> Option<ChannelState> {
        self.0.get(channel).copied()
    }

    pub fn count(&self, state: ChannelState) -> usize {
        self.0.iter().filter(|s| **s == state).count()
    }

    /// At least one source and one sink.
    pub fn can_stimulate(&self) -> bool {
        self.count(ChannelState::Source) >= 1 && self.count(ChannelState::Sink) >= 1
    }

    /// Two bits per channel, channel `i` at bits `2i..2i+2`.
    pub fn pack(&self) -> u32 {
        self.0
            .iter()
            .enumerate()
            .fold(0u32, |acc, (i, s)| acc | (s.bits() << (2 * i)))
    }

    /// Inverse of [`pack`](Self::pack). The two top bits must be zero.
    pub fn unpack(word: u32) -> Result<Self, DeviceError> {
        if word >> (2 * CHANNEL_COUNT) != 0 {
            return Err(DeviceError::Validation {
                field: "channels",
                reason: format!("reserved bits set in {word:#010x}"),
            });
        }
        let mut states = [ChannelState::NoConnection; CHANNEL_COUNT];
        for (i, s) in states.iter_mut().enumerate() {
            *s = ChannelState::from_bits(word >> (2 * i));
        }
        Ok(Self(states))
    }
}
