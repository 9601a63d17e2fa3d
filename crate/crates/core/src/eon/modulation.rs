//! Transceiver modulation formats and the distance-adaptive rule.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModulationFormat {
    #[serde(rename = "BPSK")]
    Bpsk,
    #[serde(rename = "QPSK")]
    Qpsk,
    #[serde(rename = "8QAM")]
    Qam8,
    #[serde(rename = "16QAM")]
    Qam16,
}

impl ModulationFormat {
    pub const ALL: [ModulationFormat; 4] = [Self::Bpsk, Self::Qpsk, Self::Qam8, Self::Qam16];

    /// Transceiver bitrate on one 37.5 GHz channel, Gbps.
    pub fn bitrate_gbps(self) -> f64 {
        match self {
            Self::Bpsk => 50.0,
            Self::Qpsk => 100.0,
            Self::Qam8 => 150.0,
            Self::Qam16 => 200.0,
        }
    }

    /// Transparent reach, km.
    pub fn reach_km(self) -> f64 {
        match self {
            Self::Bpsk => 6300.0,
            Self::Qpsk => 3500.0,
            Self::Qam8 => 1200.0,
            Self::Qam16 => 600.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Bpsk => "BPSK",
            Self::Qpsk => "QPSK",
            Self::Qam8 => "8QAM",
            Self::Qam16 => "16QAM",
        }
    }

    /// Regenerators needed to cover `length_km`: ceil(length / reach) - 1.
    pub fn regenerators(self, length_km: f64) -> u32 {
        ((length_km / self.reach_km()).ceil() as u32).saturating_sub(1)
    }

    /// Channels needed to carry `bitrate_gbps`.
    pub fn channels_for(self, bitrate_gbps: f64) -> usize {
        (bitrate_gbps / self.bitrate_gbps()).ceil().max(1.0) as usize
    }
}

impl std::fmt::Display for ModulationFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
