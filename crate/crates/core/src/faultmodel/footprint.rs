use serde::{Deserialize, Serialize};

/// Half-open index range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub lo: u32,
    pub hi: u32,
}

impl Span {
    pub fn new(lo: u32, hi: u32) -> Self {
        debug_assert!(lo < hi);
        Self { lo, hi }
    }
    pub fn one(i: u32) -> Self {
        Self { lo: i, hi: i + 1 }
    }
    pub fn all(n: u32) -> Self {
        Self { lo: 0, hi: n }
    }
    pub fn len(&self) -> u32 {
        self.hi - self.lo
    }
    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }
    pub fn contains(&self, i: u32) -> bool {
        self.lo <= i && i < self.hi
    }
    pub fn intersects(&self, o: &Span) -> bool {
        self.lo < o.hi && o.lo < self.hi
    }
    pub fn intersect(&self, o: &Span) -> Option<Span> {
        let lo = self.lo.max(o.lo);
        let hi = self.hi.min(o.hi);
        (lo < hi).then_some(Span { lo, hi })
    }
}

/// Row selection: a contiguous range, or every row whose address bit
/// `bit` equals `value`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowSel {
    Span(Span),
    AddrBit { bit: u32, value: bool },
}

impl RowSel {
    pub fn contains(&self, r: u32) -> bool {
        match *self {
            RowSel::Span(s) => s.contains(r),
            RowSel::AddrBit { bit, value } => (r >> bit & 1 == 1) == value,
        }
    }

    pub fn count(&self, rows: u32) -> u32 {
        match *self {
            RowSel::Span(s) => s.len(),
            RowSel::AddrBit { .. } => rows / 2,
        }
    }

    /// Smallest selected row in `s`, if any.
    fn first_in(&self, s: Span) -> Option<u32> {
        match *self {
            RowSel::Span(t) => t.intersect(&s).map(|x| x.lo),
            RowSel::AddrBit { bit, value } => {
                let period = 1u32 << bit;
                let r = s.lo;
                if (r >> bit & 1 == 1) == value {
                    return Some(r);
                }
                // next row where the bit flips
                let next = (r | (period - 1)).checked_add(1)?;
                (next < s.hi).then_some(next)
            }
        }
    }

    pub fn intersects(&self, o: &RowSel) -> bool {
        match (self, o) {
            (RowSel::Span(a), RowSel::Span(b)) => a.intersects(b),
            (RowSel::Span(a), b) | (b, RowSel::Span(a)) => b.first_in(*a).is_some(),
            (RowSel::AddrBit { bit: b1, value: v1 }, RowSel::AddrBit { bit: b2, value: v2 }) => b1 != b2 || v1 == v2,
        }
    }

    pub fn is_single(&self) -> bool {
        matches!(self, RowSel::Span(s) if s.len() == 1)
    }
}

/// Bit positions within one chip access (or one stacked-memory line).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BitSel {
    All,
    Mask([u64; 8]),
}

impl BitSel {
    pub fn single(b: u32) -> Self {
        let mut m = [0u64; 8];
        m[(b / 64) as usize] |= 1 << (b % 64);
        BitSel::Mask(m)
    }

    pub fn range(lo: u32, hi: u32) -> Self {
        let mut m = [0u64; 8];
        for b in lo..hi {
            m[(b / 64) as usize] |= 1 << (b % 64);
        }
        BitSel::Mask(m)
    }

    pub fn from_bits(bits: impl IntoIterator<Item = u32>) -> Self {
        let mut m = [0u64; 8];
        for b in bits {
            m[(b / 64) as usize] |= 1 << (b % 64);
        }
        BitSel::Mask(m)
    }

    pub fn intersects(&self, o: &BitSel) -> bool {
        match (self, o) {
            (BitSel::Mask(a), BitSel::Mask(b)) => a.iter().zip(b).any(|(x, y)| x & y != 0),
            _ => true,
        }
    }

    pub fn count(&self, width: u32) -> u32 {
        match self {
            BitSel::All => width,
            BitSel::Mask(m) => m.iter().map(|w| w.count_ones()).sum(),
        }
    }

    pub fn contains(&self, b: u32) -> bool {
        match self {
            BitSel::All => true,
            BitSel::Mask(m) => m[(b / 64) as usize] >> (b % 64) & 1 == 1,
        }
    }

    /// Set of `group`-bit symbols touched, as a bitmask over symbol indices.
    pub fn symbols(&self, width: u32, group: u32) -> u64 {
        let n = width.div_ceil(group);
        match self {
            BitSel::All => {
                if n >= 64 {
                    u64::MAX
                } else {
                    (1u64 << n) - 1
                }
            }
            BitSel::Mask(_) => {
                let mut s = 0u64;
                for b in 0..width {
                    if self.contains(b) {
                        s |= 1 << ((b / group).min(63));
                    }
                }
                s
            }
        }
    }
}

/// Device coordinates covered by one fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Footprint {
    pub channels: Span,
    pub ranks: Span,
    pub chip: u32,
    pub banks: Span,
    pub rows: RowSel,
    pub cols: Span,
    pub bits: BitSel,
}

impl Footprint {
    /// True when both footprints cover a common (bank, row, column) address,
    /// ignoring which device each sits in.
    pub fn shares_address(&self, o: &Footprint) -> bool {
        self.banks.intersects(&o.banks) && self.cols.intersects(&o.cols) && self.rows.intersects(&o.rows)
    }

    /// Same channel and rank reach as well as a common address.
    pub fn shares_codeword_slot(&self, o: &Footprint) -> bool {
        self.channels.intersects(&o.channels) && self.ranks.intersects(&o.ranks) && self.shares_address(o)
    }

    pub fn same_device(&self, o: &Footprint) -> bool {
        self.chip == o.chip && self.channels.intersects(&o.channels) && self.ranks.intersects(&o.ranks)
    }

    /// Overlap including bit positions, for faults in one device.
    pub fn overlaps(&self, o: &Footprint) -> bool {
        self.same_device(o) && self.shares_address(o) && self.bits.intersects(&o.bits)
    }

    /// Number of (row, column) cache-line slots covered in each bank.
    pub fn lines_per_bank(&self, rows: u32) -> u64 {
        self.rows.count(rows) as u64 * self.cols.len() as u64
    }
}
