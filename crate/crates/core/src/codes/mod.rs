//! Bit-exact codecs and parity primitives.

mod bitblock;
mod crc;
mod hamming;
mod probe;
mod sec;
mod syndrome;

pub use bitblock::BitBlock;
pub use crc::{CrcCodec, CrcSpec, crc_compute};
pub use hamming::Hamming7264;
pub use probe::{ErrorMode, ProbeResult, burst_windows, detection_rate_probe, probe_codec};
pub use sec::SecCode;

use crate::error::{Error, Result, check_width};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CodecStatus {
    Clean,
    Corrected,
    DetectedUncorrectable,
    /// Only assigned by callers that know the ground truth.
    MiscorrectedUnknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodecVerdict {
    pub status: CodecStatus,
    pub corrected_positions: Vec<usize>,
    pub syndrome: u64,
}

impl CodecVerdict {
    pub(crate) fn clean() -> Self {
        Self { status: CodecStatus::Clean, corrected_positions: Vec::new(), syndrome: 0 }
    }

    pub(crate) fn corrected(pos: usize, syndrome: u64) -> Self {
        Self { status: CodecStatus::Corrected, corrected_positions: vec![pos], syndrome }
    }

    pub(crate) fn uncorrectable(syndrome: u64) -> Self {
        Self {
            status: CodecStatus::DetectedUncorrectable,
            corrected_positions: Vec::new(),
            syndrome,
        }
    }

    /// Re-label a CORRECTED verdict whose payload disagrees with the truth.
    pub fn judge(mut self, decoded: &BitBlock, truth: &BitBlock) -> Self {
        if self.status == CodecStatus::Corrected && decoded != truth {
            self.status = CodecStatus::MiscorrectedUnknown;
        }
        self
    }
}

/// A systematic block code over [`BitBlock`]s.
pub trait Codec: Send + Sync {
    fn id(&self) -> CodecId;
    fn data_width(&self) -> usize;
    fn code_width(&self) -> usize;
    fn encode(&self, data: &BitBlock) -> Result<BitBlock>;
    fn decode(&self, cw: &BitBlock) -> Result<(BitBlock, CodecVerdict)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodecId {
    Hamming7264,
    Crc8Atm,
    Crc21,
    Crc32,
}

impl CodecId {
    pub const ALL: [CodecId; 4] = [Self::Hamming7264, Self::Crc8Atm, Self::Crc21, Self::Crc32];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Hamming7264 => "hamming7264",
            Self::Crc8Atm => "crc8atm",
            Self::Crc21 => "crc21",
            Self::Crc32 => "crc32",
        }
    }

    pub fn build(self) -> Box<dyn Codec> {
        match self {
            Self::Hamming7264 => Box::new(Hamming7264::new()),
            Self::Crc8Atm => Box::new(CrcCodec::new(CrcSpec::crc8_atm())),
            Self::Crc21 => Box::new(CrcCodec::new(CrcSpec::crc21())),
            Self::Crc32 => Box::new(CrcCodec::new(CrcSpec::crc32())),
        }
    }
}

impl fmt::Display for CodecId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CodecId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace(['-', '_'], "");
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == norm || (norm == "crc8atmsecded" && *c == Self::Crc8Atm))
            .ok_or_else(|| Error::Invalid(format!("unknown codec '{s}'")))
    }
}

/// Bitwise XOR of equal-width lines.
pub fn parity_xor(lines: &[BitBlock]) -> Result<BitBlock> {
    let first = lines
        .first()
        .ok_or_else(|| Error::Invalid("parity over an empty set".into()))?;
    let mut acc = first.clone();
    for l in &lines[1..] {
        check_width(acc.width(), l.width())?;
        acc.xor_assign(l);
    }
    Ok(acc)
}

/// XOR parity over 64-bit words.
pub fn parity_u64(words: &[u64]) -> u64 {
    words.iter().fold(0, |a, w| a ^ w)
}
