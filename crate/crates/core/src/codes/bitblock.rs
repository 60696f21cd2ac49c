use rand::{Rng, RngExt};
use std::fmt;

/// Fixed-width bit vector, indexed from the least-significant bit.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitBlock {
    words: Vec<u64>,
    width: usize,
}

impl BitBlock {
    pub fn zeros(width: usize) -> Self {
        assert!(width > 0, "BitBlock width must be positive");
        Self { words: vec![0; width.div_ceil(64)], width }
    }

    pub fn ones(width: usize) -> Self {
        let mut b = Self::zeros(width);
        for w in &mut b.words {
            *w = u64::MAX;
        }
        b.mask_tail();
        b
    }

    pub fn from_u64(value: u64, width: usize) -> Self {
        let mut b = Self::zeros(width);
        b.words[0] = value;
        b.mask_tail();
        b
    }

    pub fn from_words(words: &[u64], width: usize) -> Self {
        let mut b = Self::zeros(width);
        let n = b.words.len().min(words.len());
        b.words[..n].copy_from_slice(&words[..n]);
        b.mask_tail();
        b
    }

    pub fn random<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Self {
        let mut b = Self::zeros(width);
        for w in &mut b.words {
            *w = rng.random();
        }
        b.mask_tail();
        b
    }

    fn mask_tail(&mut self) {
        let rem = self.width % 64;
        if rem != 0 {
            let last = self.words.len() - 1;
            self.words[last] &= (1u64 << rem) - 1;
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Low 64 bits.
    pub fn as_u64(&self) -> u64 {
        self.words[0]
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.width);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.width, "bit {i} out of range for width {}", self.width);
        let m = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= m;
        } else {
            self.words[i / 64] &= !m;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        assert!(i < self.width, "bit {i} out of range for width {}", self.width);
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn xor_assign(&mut self, other: &BitBlock) {
        assert_eq!(self.width, other.width, "xor of mismatched widths");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Indices of set bits in ascending order.
    pub fn ones_iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let t = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + t)
            })
        })
    }

    /// Bits `[lo, lo + len)` as a new block.
    pub fn slice(&self, lo: usize, len: usize) -> BitBlock {
        assert!(lo + len <= self.width);
        let mut out = BitBlock::zeros(len);
        for i in 0..len {
            if self.get(lo + i) {
                out.set(i, true);
            }
        }
        out
    }

    /// Concatenation with `self` in the low bits.
    pub fn concat(&self, high: &BitBlock) -> BitBlock {
        let mut out = BitBlock::zeros(self.width + high.width);
        for i in self.ones_iter() {
            out.set(i, true);
        }
        for i in high.ones_iter() {
            out.set(self.width + i, true);
        }
        out
    }

    /// Byte `k` holds bits `8k..8k+8`, bit `8k+7` in the MSB.
    #[inline]
    pub(crate) fn byte(&self, k: usize) -> u8 {
        (self.words[k / 8] >> ((k % 8) * 8)) as u8
    }
}

impl fmt::Debug for BitBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitBlock[{}](", self.width)?;
        for w in self.words.iter().rev() {
            write!(f, "{w:016x}")?;
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tail_is_masked() {
        let b = BitBlock::ones(70);
        assert_eq!(b.count_ones(), 70);
        assert_eq!(BitBlock::from_u64(u64::MAX, 8).as_u64(), 0xff);
    }

    #[test]
    fn ones_iter_matches_get() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = BitBlock::random(543, &mut rng);
        let listed: Vec<usize> = b.ones_iter().collect();
        let scanned: Vec<usize> = (0..543).filter(|&i| b.get(i)).collect();
        assert_eq!(listed, scanned);
    }

    #[test]
    fn slice_concat_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = BitBlock::random(200, &mut rng);
        let lo = b.slice(0, 72);
        let hi = b.slice(72, 128);
        assert_eq!(lo.concat(&hi), b);
    }

    #[test]
    fn bytes_are_lsb_first() {
        let b = BitBlock::from_u64(0x1234, 16);
        assert_eq!(b.byte(0), 0x34);
        assert_eq!(b.byte(1), 0x12);
    }
}
