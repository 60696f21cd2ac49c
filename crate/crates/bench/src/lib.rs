//! Shared fixtures for the criterion benchmarks.

use memshield_core::codes::BitBlock;
use memshield_core::simkernel::trial_rng;
use memshield_core::sudoku::{DATA_BITS, LineCodec};

/// `n` encoded cache lines, their data and the XOR parity of the data.
pub fn sudoku_group(n: usize, seed: u64) -> (Vec<BitBlock>, BitBlock) {
    let codec = LineCodec::global();
    let mut rng = trial_rng(seed, 0);
    let mut parity = BitBlock::zeros(DATA_BITS);
    let lines = (0..n)
        .map(|_| {
            let d = BitBlock::random(DATA_BITS, &mut rng);
            parity.xor_assign(&d);
            codec.encode(&d).expect("512-bit data")
        })
        .collect();
    (lines, parity)
}

pub fn random_block(width: usize, seed: u64) -> BitBlock {
    BitBlock::random(width, &mut trial_rng(seed, 1))
}
