//! Extended Hamming (72,64) SECDED.
//!
//! Codeword bit `i < 71` sits at classic Hamming position `i + 1`; check bits
//! occupy the power-of-two positions 1, 2, 4, .., 64 and data bits fill the
//! remaining positions in ascending order. Bit 71 is overall parity. The
//! parity-check matrix column of bit `i < 71` is therefore `(i + 1) | 0x80`
//! and that of bit 71 is `0x80`.

use super::syndrome::SyndromeTable;
use super::{BitBlock, Codec, CodecId, CodecStatus, CodecVerdict};
use crate::error::{Result, check_width};

#[derive(Clone)]
pub struct Hamming7264 {
    data_pos: [u8; 64],
    table: SyndromeTable,
}

impl Default for Hamming7264 {
    fn default() -> Self {
        Self::new()
    }
}

impl Hamming7264 {
    pub fn new() -> Self {
        let mut data_pos = [0u8; 64];
        let mut j = 0;
        for classic in 1..=71usize {
            if !classic.is_power_of_two() {
                data_pos[j] = (classic - 1) as u8;
                j += 1;
            }
        }
        debug_assert_eq!(j, 64);
        let table = SyndromeTable::new(72, |i| if i < 71 { (i as u64 + 1) | 0x80 } else { 0x80 });
        Self { data_pos, table }
    }

    /// Codeword index of data bit `j`.
    pub fn data_position(&self, j: usize) -> usize {
        self.data_pos[j] as usize
    }

    pub fn encode_word(&self, data: u64) -> u128 {
        let mut cw = 0u128;
        for (j, &p) in self.data_pos.iter().enumerate() {
            cw |= (((data >> j) & 1) as u128) << p;
        }
        let s = self.table.of_u128(cw) & 0x7f;
        for k in 0..7 {
            if s >> k & 1 == 1 {
                cw |= 1u128 << ((1usize << k) - 1);
            }
        }
        if cw.count_ones() % 2 == 1 {
            cw |= 1u128 << 71;
        }
        cw
    }

    pub fn extract(&self, cw: u128) -> u64 {
        let mut d = 0u64;
        for (j, &p) in self.data_pos.iter().enumerate() {
            d |= (((cw >> p) & 1) as u64) << j;
        }
        d
    }

    #[inline]
    pub fn syndrome(&self, cw: u128) -> u64 {
        self.table.of_u128(cw)
    }

    /// Decode a raw 72-bit codeword. Returns the (possibly corrected) data,
    /// the verdict status, and the flipped position if any.
    pub fn decode_word(&self, cw: u128) -> (u64, CodecStatus, Option<usize>, u64) {
        let s = self.syndrome(cw);
        if s == 0 {
            return (self.extract(cw), CodecStatus::Clean, None, 0);
        }
        let low = (s & 0x7f) as usize;
        if s & 0x80 == 0 {
            return (self.extract(cw), CodecStatus::DetectedUncorrectable, None, s);
        }
        let pos = if low == 0 { 71 } else { low - 1 };
        if pos > 71 || (low != 0 && low > 71) {
            return (self.extract(cw), CodecStatus::DetectedUncorrectable, None, s);
        }
        let fixed = cw ^ (1u128 << pos);
        (self.extract(fixed), CodecStatus::Corrected, Some(pos), s)
    }
}

fn block_to_u128(b: &BitBlock) -> u128 {
    let w = b.words();
    w[0] as u128 | ((*w.get(1).unwrap_or(&0) as u128) << 64)
}

pub(crate) fn u128_to_block(x: u128, width: usize) -> BitBlock {
    BitBlock::from_words(&[x as u64, (x >> 64) as u64], width)
}

impl Codec for Hamming7264 {
    fn id(&self) -> CodecId {
        CodecId::Hamming7264
    }
    fn data_width(&self) -> usize {
        64
    }
    fn code_width(&self) -> usize {
        72
    }
    fn encode(&self, data: &BitBlock) -> Result<BitBlock> {
        check_width(64, data.width())?;
        Ok(u128_to_block(self.encode_word(data.as_u64()), 72))
    }
    fn decode(&self, cw: &BitBlock) -> Result<(BitBlock, CodecVerdict)> {
        check_width(72, cw.width())?;
        let (d, status, pos, s) = self.decode_word(block_to_u128(cw));
        let v = match status {
            CodecStatus::Clean => CodecVerdict::clean(),
            CodecStatus::Corrected => CodecVerdict::corrected(pos.unwrap_or(0), s),
            _ => CodecVerdict::uncorrectable(s),
        };
        Ok((BitBlock::from_u64(d, 64), v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_data_zero_codeword() {
        let h = Hamming7264::new();
        assert_eq!(h.encode_word(0), 0);
        let cw = h.encode(&BitBlock::zeros(64)).unwrap();
        assert!(cw.is_zero());
    }

    #[test]
    fn check_bits_at_powers_of_two() {
        let h = Hamming7264::new();
        let mut used: Vec<usize> = (0..64).map(|j| h.data_position(j)).collect();
        used.sort();
        used.dedup();
        assert_eq!(used.len(), 64);
        for k in 0..7 {
            assert!(!used.contains(&((1 << k) - 1)));
        }
        assert!(!used.contains(&71));
    }

    #[test]
    fn secded_exhaustive_on_fixed_word() {
        let h = Hamming7264::new();
        let d = 0xdead_beef_0123_4567u64;
        let cw = h.encode_word(d);
        for i in 0..72 {
            let (out, st, pos, _) = h.decode_word(cw ^ (1u128 << i));
            assert_eq!(st, CodecStatus::Corrected);
            assert_eq!(pos, Some(i));
            assert_eq!(out, d);
            for j in (i + 1)..72 {
                let (_, st2, _, _) = h.decode_word(cw ^ (1u128 << i) ^ (1u128 << j));
                assert_eq!(st2, CodecStatus::DetectedUncorrectable, "{i},{j}");
            }
        }
    }

    proptest! {
        #[test]
        fn secded_contract_random_words(d in any::<u64>(), i in 0usize..72, j in 0usize..72) {
            let h = Hamming7264::new();
            let cw = h.encode_word(d);
            prop_assert_eq!(h.decode_word(cw), (d, CodecStatus::Clean, None, 0));
            let (out, st, _, _) = h.decode_word(cw ^ (1u128 << i));
            prop_assert_eq!(st, CodecStatus::Corrected);
            prop_assert_eq!(out, d);
            if i != j {
                let (_, st2, _, _) = h.decode_word(cw ^ (1u128 << i) ^ (1u128 << j));
                prop_assert_eq!(st2, CodecStatus::DetectedUncorrectable);
            }
        }
    }
}
