use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Bit,
    Word,
    Column,
    Row,
    Bank,
    #[serde(rename = "multibank")]
    MultiBank,
    #[serde(rename = "multirank")]
    MultiRank,
    DataTsv,
    AddrTsv,
}

impl Granularity {
    pub const ALL: [Granularity; 9] = [
        Self::Bit,
        Self::Word,
        Self::Column,
        Self::Row,
        Self::Bank,
        Self::MultiBank,
        Self::MultiRank,
        Self::DataTsv,
        Self::AddrTsv,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Bit => "bit",
            Self::Word => "word",
            Self::Column => "column",
            Self::Row => "row",
            Self::Bank => "bank",
            Self::MultiBank => "multibank",
            Self::MultiRank => "multirank",
            Self::DataTsv => "data_tsv",
            Self::AddrTsv => "addr_tsv",
        }
    }

    pub fn is_tsv(self) -> bool {
        matches!(self, Self::DataTsv | Self::AddrTsv)
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Granularity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown granularity '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Permanence {
    Transient,
    Permanent,
}

/// How TSV faults map onto dies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TsvTopology {
    /// A channel is one die; its TSVs reach only that die's banks.
    ChannelPerDie,
    /// Channel `c` is bank `c` of every die; its TSVs run through all dies.
    ChannelPerBankIndex,
}

/// Device topology. For stacked memory each channel is one die and
/// `ranks_per_channel == chips_per_rank == 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub channels: u32,
    pub ranks_per_channel: u32,
    pub chips_per_rank: u32,
    pub banks_per_chip: u32,
    pub rows_per_bank: u32,
    pub cols_per_row: u32,
    pub bits_per_chip_per_access: u32,
    pub words_per_line: u32,
    pub data_tsvs_per_channel: u32,
    pub addr_tsvs_per_channel: u32,
    pub burst_length: u32,
    pub tsv_topology: TsvTopology,
}

impl Geometry {
    /// Four channels of two ranks of nine x8 chips (8 data + 1 check).
    pub fn dimm_x8() -> Self {
        Self {
            channels: 4,
            ranks_per_channel: 2,
            chips_per_rank: 9,
            banks_per_chip: 8,
            rows_per_bank: 32768,
            cols_per_row: 128,
            bits_per_chip_per_access: 64,
            words_per_line: 8,
            data_tsvs_per_channel: 0,
            addr_tsvs_per_channel: 0,
            burst_length: 8,
            tsv_topology: TsvTopology::ChannelPerDie,
        }
    }

    /// Same capacity built from eighteen x4 chips per rank.
    pub fn dimm_x4() -> Self {
        Self { chips_per_rank: 18, bits_per_chip_per_access: 32, ..Self::dimm_x8() }
    }

    /// 8 GB stack: 8 data dies, one channel each, 8 banks of 2 KB rows.
    pub fn stack_8gb() -> Self {
        Self {
            channels: 8,
            ranks_per_channel: 1,
            chips_per_rank: 1,
            banks_per_chip: 8,
            rows_per_bank: 65536,
            cols_per_row: 32,
            bits_per_chip_per_access: 512,
            words_per_line: 8,
            data_tsvs_per_channel: 256,
            addr_tsvs_per_channel: 24,
            burst_length: 2,
            tsv_topology: TsvTopology::ChannelPerDie,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.channels,
            self.ranks_per_channel,
            self.chips_per_rank,
            self.banks_per_chip,
            self.rows_per_bank,
            self.cols_per_row,
            self.bits_per_chip_per_access,
            self.words_per_line,
            self.burst_length,
        ];
        if counts.contains(&0) {
            return Err(Error::Config("geometry counts must be >= 1".into()));
        }
        if !self.rows_per_bank.is_power_of_two() {
            return Err(Error::Config("rows_per_bank must be a power of two".into()));
        }
        if self.bits_per_chip_per_access > 512 {
            return Err(Error::Config("bits_per_chip_per_access must be <= 512".into()));
        }
        if self.data_tsvs_per_channel * self.burst_length > self.bits_per_chip_per_access && self.data_tsvs_per_channel > 0 {
            return Err(Error::Config("data TSVs × burst exceed the access width".into()));
        }
        Ok(())
    }

    pub fn devices(&self) -> u32 {
        self.channels * self.ranks_per_channel * self.chips_per_rank
    }

    pub fn row_bits(&self) -> u32 {
        self.rows_per_bank.trailing_zeros()
    }

    pub fn tsvs_per_channel(&self) -> u32 {
        self.data_tsvs_per_channel + self.addr_tsvs_per_channel
    }
}
