//! Single-error-correcting Hamming code of arbitrary length.
//!
//! Codeword layout: payload bits `0..n`, check bits `n..n+r`. Check bit `j`
//! has column `1 << j`; payload bit `i` takes the `i`-th integer >= 3 that is
//! not a power of two. Syndromes that match no column are reported as
//! uncorrectable.

use super::syndrome::SyndromeTable;
use super::{BitBlock, CodecStatus};
use crate::error::{Error, Result, check_width};

#[derive(Clone)]
pub struct SecCode {
    n: usize,
    r: usize,
    columns: Vec<u32>,
    position_of: Vec<i32>,
    table: SyndromeTable,
}

impl SecCode {
    pub fn new(n: usize, r: usize) -> Result<Self> {
        if r == 0 || r > 20 || (1usize << r) - 1 - r < n {
            return Err(Error::Invalid(format!("SEC code cannot protect {n} bits with {r} checks")));
        }
        let mut columns: Vec<u32> = (1u32..(1 << r)).filter(|c| !c.is_power_of_two()).take(n).collect();
        columns.extend((0..r).map(|j| 1u32 << j));
        let mut position_of = vec![-1i32; 1 << r];
        for (i, &c) in columns.iter().enumerate() {
            position_of[c as usize] = i as i32;
        }
        let cols = columns.clone();
        let table = SyndromeTable::new(n + r, move |i| cols[i] as u64);
        Ok(Self { n, r, columns, position_of, table })
    }

    pub fn payload_width(&self) -> usize {
        self.n
    }

    pub fn check_width(&self) -> usize {
        self.r
    }

    pub fn code_width(&self) -> usize {
        self.n + self.r
    }

    pub fn column(&self, i: usize) -> u32 {
        self.columns[i]
    }

    pub fn syndrome(&self, cw: &BitBlock) -> u32 {
        self.table.of_block(cw) as u32
    }

    /// Overwrite the check bits so the syndrome is zero.
    pub fn encode_in_place(&self, cw: &mut BitBlock) -> Result<()> {
        check_width(self.code_width(), cw.width())?;
        for j in 0..self.r {
            cw.set(self.n + j, false);
        }
        let s = self.syndrome(cw);
        for j in 0..self.r {
            cw.set(self.n + j, s >> j & 1 == 1);
        }
        Ok(())
    }

    /// Position a nonzero syndrome points at, if any.
    pub fn locate(&self, syndrome: u32) -> Option<usize> {
        let p = *self.position_of.get(syndrome as usize)?;
        (p >= 0).then_some(p as usize)
    }

    /// Correct at most one bit in place.
    pub fn correct(&self, cw: &mut BitBlock) -> (CodecStatus, Option<usize>) {
        let s = self.syndrome(cw);
        if s == 0 {
            return (CodecStatus::Clean, None);
        }
        match self.locate(s) {
            Some(p) => {
                cw.flip(p);
                (CodecStatus::Corrected, Some(p))
            }
            None => (CodecStatus::DetectedUncorrectable, None),
        }
    }
}
