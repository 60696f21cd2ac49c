//! Non-reflected, MSB-first CRCs.
//!
//! Payload bit `j` is the coefficient of `x^j`, so the highest-indexed bit is
//! shifted in first. A codeword stores the checksum in bits `0..width` and the
//! payload above it, which makes a codeword the polynomial `d(x)·x^w + r(x)`.

use super::{BitBlock, Codec, CodecId, CodecVerdict};
use crate::error::{Error, Result, check_width};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CrcSpec {
    pub width: u32,
    /// Generator coefficients below the implied `x^width` term.
    pub generator: u64,
    pub init: u64,
    pub data_width: usize,
}

impl CrcSpec {
    /// ATM HEC polynomial x^8 + x^2 + x + 1 over a 64-bit payload.
    pub fn crc8_atm() -> Self {
        Self { width: 8, generator: 0x07, init: 0, data_width: 64 }
    }

    /// x^21 + x^20 + x^13 + x^11 + x^7 + x^4 + x^3 + 1 (full mask 0x302899),
    /// Hamming distance 6 over a 512-bit payload.
    pub fn crc21() -> Self {
        Self { width: 21, generator: 0x30_2899 & 0x1f_ffff, init: 0, data_width: 512 }
    }

    /// 0x04C11DB7 with an all-ones register preset.
    pub fn crc32() -> Self {
        Self { width: 32, generator: 0x04c1_1db7, init: 0xffff_ffff, data_width: 512 }
    }

    pub fn with_data_width(mut self, data_width: usize) -> Self {
        self.data_width = data_width;
        self
    }

    pub fn mask(&self) -> u64 {
        (1u64 << self.width) - 1
    }

    fn validate(&self) -> Result<()> {
        if !(8..=32).contains(&self.width) || self.generator & !self.mask() != 0 || self.generator & 1 == 0 {
            return Err(Error::Invalid(format!("unsupported CRC spec {self:?}")));
        }
        if self.init & !self.mask() != 0 || self.data_width == 0 {
            return Err(Error::Invalid(format!("unsupported CRC spec {self:?}")));
        }
        Ok(())
    }
}

/// One-shot checksum; builds a lookup table on every call.
pub fn crc_compute(spec: CrcSpec, data: &BitBlock) -> Result<u64> {
    CrcCodec::try_new(spec)?.checksum(data)
}

/// Table-driven CRC engine usable as a codec.
#[derive(Clone)]
pub struct CrcCodec {
    spec: CrcSpec,
    table: Box<[u64; 256]>,
    single: HashMap<u64, usize>,
}

impl CrcCodec {
    pub fn new(spec: CrcSpec) -> Self {
        Self::try_new(spec).expect("valid CRC spec")
    }

    pub fn try_new(spec: CrcSpec) -> Result<Self> {
        spec.validate()?;
        let w = spec.width;
        let mut table = Box::new([0u64; 256]);
        for (b, slot) in table.iter_mut().enumerate() {
            let mut reg = (b as u64) << (w - 8);
            for _ in 0..8 {
                let top = reg >> (w - 1) & 1;
                reg = (reg << 1) & spec.mask();
                if top == 1 {
                    reg ^= spec.generator;
                }
            }
            *slot = reg;
        }
        let mut c = Self { spec, table, single: HashMap::new() };
        // Single-error correction is only offered where every single-bit
        // syndrome is distinct and has odd weight under the (x+1) factor.
        if spec.width == 8 && spec.data_width + 8 <= 127 {
            for i in 0..c.code_width() {
                c.single.insert(c.unit_syndrome(i), i);
            }
            debug_assert_eq!(c.single.len(), c.code_width());
        }
        Ok(c)
    }

    pub fn spec(&self) -> &CrcSpec {
        &self.spec
    }

    fn shift_bits(&self, mut reg: u64, bits: u64, n: u32) -> u64 {
        for k in (0..n).rev() {
            let top = (reg >> (self.spec.width - 1) & 1) ^ (bits >> k & 1);
            reg = (reg << 1) & self.spec.mask();
            if top == 1 {
                reg ^= self.spec.generator;
            }
        }
        reg
    }

    /// Register after shifting in `data` from an arbitrary preset.
    fn run(&self, init: u64, data: &BitBlock) -> u64 {
        let w = self.spec.width;
        let n = data.width();
        let full = n / 8;
        let rem = n % 8;
        let mut reg = init;
        if rem != 0 {
            reg = self.shift_bits(reg, data.byte(full) as u64, rem as u32);
        }
        for k in (0..full).rev() {
            let idx = ((reg >> (w - 8)) ^ data.byte(k) as u64) & 0xff;
            reg = ((reg << 8) & self.spec.mask()) ^ self.table[idx as usize];
        }
        reg
    }

    pub fn checksum(&self, data: &BitBlock) -> Result<u64> {
        check_width(self.spec.data_width, data.width())?;
        Ok(self.run(self.spec.init, data))
    }

    /// Checksum with zero preset over a payload of any width. Linear in the
    /// payload.
    pub fn linear(&self, data: &BitBlock) -> u64 {
        self.run(0, data)
    }

    /// Syndrome contribution of a single flipped codeword bit.
    pub fn unit_syndrome(&self, i: usize) -> u64 {
        let w = self.spec.width as usize;
        if i < w {
            1 << i
        } else {
            let mut e = BitBlock::zeros(self.spec.data_width);
            e.flip(i - w);
            self.linear(&e)
        }
    }

    pub fn syndrome(&self, cw: &BitBlock) -> Result<u64> {
        check_width(self.code_width(), cw.width())?;
        let w = self.spec.width as usize;
        let data = cw.slice(w, self.spec.data_width);
        let stored = cw.words()[0] & self.spec.mask();
        Ok(self.checksum(&data)? ^ stored)
    }
}

impl Codec for CrcCodec {
    fn id(&self) -> CodecId {
        match self.spec.width {
            8 => CodecId::Crc8Atm,
            21 => CodecId::Crc21,
            _ => CodecId::Crc32,
        }
    }
    fn data_width(&self) -> usize {
        self.spec.data_width
    }
    fn code_width(&self) -> usize {
        self.spec.data_width + self.spec.width as usize
    }
    fn encode(&self, data: &BitBlock) -> Result<BitBlock> {
        let c = self.checksum(data)?;
        Ok(BitBlock::from_u64(c, self.spec.width as usize).concat(data))
    }
    fn decode(&self, cw: &BitBlock) -> Result<(BitBlock, CodecVerdict)> {
        let s = self.syndrome(cw)?;
        let w = self.spec.width as usize;
        if s == 0 {
            return Ok((cw.slice(w, self.spec.data_width), CodecVerdict::clean()));
        }
        if let Some(&pos) = self.single.get(&s) {
            let mut fixed = cw.clone();
            fixed.flip(pos);
            return Ok((fixed.slice(w, self.spec.data_width), CodecVerdict::corrected(pos, s)));
        }
        Ok((cw.slice(w, self.spec.data_width), CodecVerdict::uncorrectable(s)))
    }
}
