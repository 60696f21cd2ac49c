//! Fault taxonomy, arrival sampling and closed-form fault mathematics.

mod fit;
mod footprint;
mod types;

pub use fit::{FIT_PRESETS, FitTable, SttramPreset, fit_preset, preset_text, sttram_preset};
pub use footprint::{BitSel, Footprint, RowSel, Span};
pub use types::{Geometry, Granularity, Permanence, TsvTopology};

use crate::error::{Error, Result};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Poisson};
use serde::{Deserialize, Serialize};

/// Seven years in hours.
pub const SEVEN_YEARS_HOURS: f64 = 7.0 * 8760.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRecord {
    pub index: u32,
    pub granularity: Granularity,
    pub permanence: Permanence,
    pub time_hours: f64,
    pub footprint: Footprint,
    /// Uniform draw owned by this fault, used for pattern-dependent
    /// detection decisions so that adding faults never reshuffles them.
    pub draw: f64,
    /// Faulty TSV index within its class, for TSV faults.
    pub tsv_index: Option<u32>,
}

impl FaultRecord {
    pub fn is_permanent(&self) -> bool {
        self.permanence == Permanence::Permanent
    }

    /// `k`-th uniform derived from this fault's draw; `k = 0` is the draw.
    pub fn sub_draw(&self, k: u64) -> f64 {
        if k == 0 {
            return self.draw;
        }
        let mut z = self.draw.to_bits() ^ k.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        (z >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Place a fault of granularity `g` uniformly at random. `unit` is the
/// device index for cell-array modes and the channel for TSV modes.
pub fn instantiate<R: Rng + ?Sized>(g: Granularity, geom: &Geometry, unit: u32, rng: &mut R) -> (Footprint, Option<u32>) {
    let per_channel = geom.ranks_per_channel * geom.chips_per_rank;
    let channel = unit / per_channel.max(1);
    let rank = (unit % per_channel) / geom.chips_per_rank;
    let chip = unit % geom.chips_per_rank;
    let width = geom.bits_per_chip_per_access;
    let all_rows = RowSel::Span(Span::all(geom.rows_per_bank));
    let mut fp = Footprint {
        channels: Span::one(channel),
        ranks: Span::one(rank),
        chip,
        banks: Span::one(rng.random_range(0..geom.banks_per_chip)),
        rows: RowSel::Span(Span::one(rng.random_range(0..geom.rows_per_bank))),
        cols: Span::one(rng.random_range(0..geom.cols_per_row)),
        bits: BitSel::All,
    };
    let mut tsv = None;
    match g {
        Granularity::Bit => fp.bits = BitSel::single(rng.random_range(0..width)),
        Granularity::Word => {
            if width > 64 {
                let w = rng.random_range(0..width / 64);
                fp.bits = BitSel::range(64 * w, 64 * w + 64);
            }
        }
        Granularity::Column => fp.rows = all_rows,
        Granularity::Row => fp.cols = Span::all(geom.cols_per_row),
        Granularity::Bank => {
            fp.rows = all_rows;
            fp.cols = Span::all(geom.cols_per_row);
        }
        Granularity::MultiBank => {
            let n = geom.banks_per_chip;
            let k = if n >= 2 { rng.random_range(2..=n) } else { 1 };
            let lo = rng.random_range(0..=n - k);
            fp.banks = Span::new(lo, lo + k);
            fp.rows = all_rows;
            fp.cols = Span::all(geom.cols_per_row);
        }
        Granularity::MultiRank => {
            fp.ranks = Span::all(geom.ranks_per_channel);
            fp.banks = Span::all(geom.banks_per_chip);
            fp.rows = all_rows;
            fp.cols = Span::all(geom.cols_per_row);
        }
        Granularity::DataTsv | Granularity::AddrTsv => {
            let c = unit % geom.channels;
            fp = tsv_channel_footprint(geom, c);
            if g == Granularity::DataTsv {
                let i = rng.random_range(0..geom.data_tsvs_per_channel.max(1));
                fp.bits = data_tsv_bits(geom, i);
                tsv = Some(i);
            } else {
                let j = rng.random_range(0..geom.addr_tsvs_per_channel.max(1));
                fp.rows = addr_tsv_rows(geom, j);
                tsv = Some(j);
            }
        }
    }
    (fp, tsv)
}

/// Everything reachable through channel `c`'s TSVs.
pub fn tsv_channel_footprint(geom: &Geometry, c: u32) -> Footprint {
    let (channels, banks) = match geom.tsv_topology {
        TsvTopology::ChannelPerDie => (Span::one(c), Span::all(geom.banks_per_chip)),
        TsvTopology::ChannelPerBankIndex => (Span::all(geom.channels), Span::one(c % geom.banks_per_chip)),
    };
    Footprint {
        channels,
        ranks: Span::all(geom.ranks_per_channel),
        chip: 0,
        banks,
        rows: RowSel::Span(Span::all(geom.rows_per_bank)),
        cols: Span::all(geom.cols_per_row),
        bits: BitSel::All,
    }
}

/// Data TSV `i` carries bit `i` of every beat of the burst.
pub fn data_tsv_bits(geom: &Geometry, i: u32) -> BitSel {
    BitSel::from_bits((0..geom.burst_length).map(|k| i + k * geom.data_tsvs_per_channel))
}

/// Address TSV `j` carries row-address bit `row_bits - 1 - (j mod row_bits)`.
/// A stuck-at-1 fault redirects every row with that bit clear, so those rows
/// become unreachable.
pub fn addr_tsv_rows(geom: &Geometry, j: u32) -> RowSel {
    let rb = geom.row_bits().max(1);
    RowSel::AddrBit { bit: rb - 1 - (j % rb), value: false }
}

/// Poisson arrivals over one lifetime, sorted by time (ties by index).
pub fn sample_arrivals_rng<R: Rng + ?Sized>(fit: &FitTable, geom: &Geometry, lifetime_hours: f64, rng: &mut R) -> Vec<FaultRecord> {
    let classes: Vec<(Granularity, Permanence, f64)> = fit
        .entries()
        .map(|(g, p, r)| {
            let units = if g.is_tsv() { geom.channels } else { geom.devices() };
            (g, p, r * units as f64 * lifetime_hours * 1e-9)
        })
        .collect();
    let total: f64 = classes.iter().map(|c| c.2).sum();
    if total <= 0.0 {
        return Vec::new();
    }
    let n = Poisson::new(total).expect("positive mean").sample(rng) as u32;
    let mut out = Vec::with_capacity(n as usize);
    for index in 0..n {
        let mut u = rng.random::<f64>() * total;
        let mut class = classes[classes.len() - 1];
        for c in &classes {
            if u < c.2 {
                class = *c;
                break;
            }
            u -= c.2;
        }
        let (g, p, _) = class;
        let units = if g.is_tsv() { geom.channels } else { geom.devices() };
        let unit = rng.random_range(0..units);
        let time_hours = rng.random::<f64>() * lifetime_hours;
        let (footprint, tsv_index) = instantiate(g, geom, unit, rng);
        let draw = rng.random::<f64>();
        out.push(FaultRecord { index, granularity: g, permanence: p, time_hours, footprint, draw, tsv_index });
    }
    out.sort_by(|a, b| a.time_hours.total_cmp(&b.time_hours).then(a.index.cmp(&b.index)));
    out
}

pub fn sample_arrivals(fit: &FitTable, geom: &Geometry, lifetime_hours: f64, seed: u64) -> Result<Vec<FaultRecord>> {
    if lifetime_hours <= 0.0 || !lifetime_hours.is_finite() {
        return Err(Error::Invalid("lifetime must be positive".into()));
    }
    geom.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_arrivals_rng(fit, geom, lifetime_hours, &mut rng))
}

/// Probability a `b`-bit word has exactly `k` faulty cells at bit error rate
/// `p`, in the small-`p·b` Poisson form. `k = 0` is the complement of all
/// `k >= 1` terms.
pub fn word_fault_prob(p: f64, b: u32, k: u32) -> f64 {
    let x = p * b as f64;
    if k == 0 {
        return 1.0 - x.exp_m1();
    }
    (1..=k).fold(1.0, |acc, i| acc * x / i as f64)
}

/// Expected number of words with exactly `k` faults, `k = 0..=4`.
pub fn expected_faulty_words(p: f64, b: u32, words: f64) -> [f64; 5] {
    std::array::from_fn(|k| words * word_fault_prob(p, b, k as u32))
}

/// Errors absorbable before two land in one of `buckets` buckets.
pub fn birthday_capacity(buckets: f64) -> f64 {
    1.2 * buckets.sqrt()
}

/// Mean number of uniform throws up to and including the first one that
/// lands in an occupied bucket.
pub fn birthday_mc(buckets: u32, trials: u32, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stamp = vec![u32::MAX; buckets as usize];
    let mut total = 0u64;
    for t in 0..trials {
        let mut throws = 0u64;
        loop {
            throws += 1;
            let b = rng.random_range(0..buckets) as usize;
            if stamp[b] == t {
                break;
            }
            stamp[b] = t;
        }
        total += throws;
    }
    total as f64 / trials as f64
}

/// Retention-failure probability of an STT-RAM cell over `t_s` seconds.
pub fn sttram_cell_ber(delta: f64, t_s: f64) -> f64 {
    let lambda = 1e9 / delta.exp();
    -(-lambda * t_s).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScalingConstraint {
    None,
    MaxOnePerWord,
}

/// Sparse layout of manufacturing (scaling) faults: sorted
/// `(word, bit)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingLayout {
    pub words: u64,
    pub bits_per_word: u32,
    pub faults: Vec<(u64, u32)>,
}

impl ScalingLayout {
    /// Fault count per faulty word, in word order.
    pub fn per_word(&self) -> Vec<(u64, u32)> {
        let mut out: Vec<(u64, u32)> = Vec::new();
        for &(w, _) in &self.faults {
            match out.last_mut() {
                Some((lw, c)) if *lw == w => *c += 1,
                _ => out.push((w, 1)),
            }
        }
        out
    }
}

pub fn scaling_fault_layout(words: u64, bits_per_word: u32, ber: f64, constraint: ScalingConstraint, seed: u64) -> Result<ScalingLayout> {
    if !(0.0..=1.0).contains(&ber) {
        return Err(Error::Invalid(format!("ber {ber} outside [0,1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = words * bits_per_word as u64;
    let mut faults = Vec::new();
    if ber > 0.0 {
        let gap = Geometric::new(ber).expect("valid probability");
        let mut pos = gap.sample(&mut rng);
        while pos < total {
            faults.push((pos / bits_per_word as u64, (pos % bits_per_word as u64) as u32));
            pos = pos.saturating_add(1).saturating_add(gap.sample(&mut rng));
        }
    }
    if constraint == ScalingConstraint::MaxOnePerWord {
        let mut kept: Vec<(u64, u32)> = Vec::with_capacity(faults.len());
        let mut i = 0;
        while i < faults.len() {
            let w = faults[i].0;
            let mut j = i;
            while j < faults.len() && faults[j].0 == w {
                j += 1;
            }
            if j - i == 1 {
                kept.push(faults[i]);
            } else {
                kept.push((w, rng.random_range(0..bits_per_word)));
            }
            i = j;
        }
        faults = kept;
    }
    Ok(ScalingLayout { words, bits_per_word, faults })
}
