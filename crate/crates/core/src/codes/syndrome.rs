use super::BitBlock;

/// Byte-sliced lookup for a linear syndrome map.
///
/// Built from the syndrome of each single-bit vector; the syndrome of any
/// vector is then the XOR of one table entry per byte.
#[derive(Clone)]
pub(crate) struct SyndromeTable {
    tables: Vec<[u64; 256]>,
    width: usize,
}

impl SyndromeTable {
    pub fn new(width: usize, unit: impl Fn(usize) -> u64) -> Self {
        let per_bit: Vec<u64> = (0..width).map(&unit).collect();
        let tables = (0..width.div_ceil(8))
            .map(|k| {
                let mut t = [0u64; 256];
                for (b, slot) in t.iter_mut().enumerate() {
                    for j in 0..8 {
                        let i = 8 * k + j;
                        if b >> j & 1 == 1 && i < width {
                            *slot ^= per_bit[i];
                        }
                    }
                }
                t
            })
            .collect();
        Self { tables, width }
    }

    pub fn of_u128(&self, x: u128) -> u64 {
        let mut s = 0;
        for (k, t) in self.tables.iter().enumerate() {
            s ^= t[(x >> (8 * k)) as u8 as usize];
        }
        s
    }

    pub fn of_block(&self, b: &BitBlock) -> u64 {
        debug_assert_eq!(b.width(), self.width);
        let mut s = 0;
        for (k, t) in self.tables.iter().enumerate() {
            s ^= t[b.byte(k) as usize];
        }
        s
    }
}
