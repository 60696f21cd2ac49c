//! Fault map encoding, word classification and the set-associative
//! replication area used to shadow faulty words.

use crate::error::{Error, Result};
use crate::faultmodel::ScalingLayout;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

pub const SETS_PER_GROUP: usize = 16;
pub const WAYS: usize = 6;
pub const GROUP_BYTES: u64 = 2048;
pub const LINE_BYTES: u64 = 64;
/// Faulty words per replication group at the reference provisioning point
/// (7.74 million words in 128K groups).
pub const DESIGN_LOAD_PER_GROUP: f64 = 7.74e6 / 131_072.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum WordClass {
    Nfc,
    Sfc,
    Mfc,
}

impl WordClass {
    pub fn of_count(faults: u32) -> Self {
        match faults {
            0 => Self::Nfc,
            1 => Self::Sfc,
            _ => Self::Mfc,
        }
    }
}

pub fn fm_encode(c: WordClass) -> u8 {
    match c {
        WordClass::Nfc => 0b0000,
        WordClass::Sfc => 0b1111,
        WordClass::Mfc => 0b1100,
    }
}

/// Anything other than the two clean patterns is treated as MFC.
pub fn fm_decode(raw: u8) -> WordClass {
    match raw & 0xf {
        0b0000 => WordClass::Nfc,
        0b1111 => WordClass::Sfc,
        _ => WordClass::Mfc,
    }
}

/// Line classes derived from a scaling-fault layout. Only non-NFC lines are
/// stored.
#[derive(Debug, Clone, PartialEq)]
pub struct LineClasses {
    pub lines: u64,
    pub faulty: Vec<(u64, WordClass)>,
}

impl LineClasses {
    pub fn class(&self, line: u64) -> WordClass {
        self.faulty
            .binary_search_by_key(&line, |e| e.0)
            .map(|i| self.faulty[i].1)
            .unwrap_or(WordClass::Nfc)
    }

    pub fn fraction(&self, c: WordClass) -> f64 {
        self.faulty.iter().filter(|e| e.1 == c).count() as f64 / self.lines as f64
    }
}

/// A line takes the class of its worst word.
pub fn classify_words(layout: &ScalingLayout, line_size_words: u64) -> LineClasses {
    let mut faulty: Vec<(u64, WordClass)> = Vec::new();
    for (word, count) in layout.per_word() {
        let line = word / line_size_words;
        let c = WordClass::of_count(count);
        match faulty.last_mut() {
            Some((l, lc)) if *l == line => *lc = (*lc).max(c),
            _ => faulty.push((line, c)),
        }
    }
    LineClasses { lines: layout.words.div_ceil(line_size_words), faulty }
}

/// 12-bit tag: 6 line-address bits, 3 word bits, valid, 2 overflow bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicationTag {
    pub line_bits: u8,
    pub word: u8,
    pub valid: bool,
    pub overflow: u8,
}

impl ReplicationTag {
    pub const WIDTH: u32 = 12;

    pub fn pack(self) -> u16 {
        (self.line_bits as u16 & 0x3f)
            | (self.word as u16 & 0x7) << 6
            | (self.valid as u16) << 9
            | (self.overflow as u16 & 0x3) << 10
    }

    pub fn unpack(raw: u16) -> Self {
        Self {
            line_bits: (raw & 0x3f) as u8,
            word: (raw >> 6 & 0x7) as u8,
            valid: raw >> 9 & 1 == 1,
            overflow: (raw >> 10 & 0x3) as u8,
        }
    }
}

/// Link to an overflow set: valid bit plus 4-bit index, stored three times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TmrLink {
    pub copies: [u8; 3],
}

impl TmrLink {
    pub fn new(target: Option<u8>) -> Self {
        let v = target.map_or(0, |i| 0x10 | (i & 0xf));
        Self { copies: [v; 3] }
    }

    /// Bitwise majority vote.
    pub fn read(&self) -> Option<u8> {
        let [a, b, c] = self.copies;
        let v = (a & b) | (a & c) | (b & c);
        (v & 0x10 != 0).then_some(v & 0xf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Lookup {
    pub hit: bool,
    pub accesses: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildReport {
    pub placed: bool,
    pub words: u64,
    pub unplaced: u64,
    pub normal_entries: u64,
    pub overflow_entries: u64,
    pub overflow_sets_used: u64,
    pub failed_groups: u64,
}

/// Replication area of `groups` groups, each with 16 normal sets and
/// `overflow_sets` overflow sets of six ways.
pub struct ReplicationArea {
    groups: u64,
    overflow_sets: usize,
    /// Packed tags, `(16 + overflow_sets) * 6` per group; 0 means empty.
    slots: Vec<u16>,
    /// Home set of each slot's entry; needed in overflow sets shared by
    /// several chains.
    homes: Vec<u8>,
    /// Per group: one link per normal set followed by one per overflow set.
    links: Vec<TmrLink>,
}

impl ReplicationArea {
    fn sets(&self) -> usize {
        SETS_PER_GROUP + self.overflow_sets
    }

    fn home(&self, line: u64) -> (u64, usize, u8) {
        let g = line % self.groups;
        let s = ((line / self.groups) % SETS_PER_GROUP as u64) as usize;
        let tag = (line / (self.groups * SETS_PER_GROUP as u64)) as u8;
        (g, s, tag)
    }

    fn set_slots(&self, g: u64, set: usize) -> std::ops::Range<usize> {
        let base = (g as usize * self.sets() + set) * WAYS;
        base..base + WAYS
    }

    fn link_index(&self, g: u64, set: usize) -> usize {
        g as usize * self.sets() + set
    }

    fn free_way(&self, g: u64, set: usize) -> Option<usize> {
        self.set_slots(g, set).find(|&i| self.slots[i] == 0)
    }

    /// Place faulty `(line, word)` pairs. Lines must fit the 6-bit tag.
    pub fn build(words: &[(u64, u8)], groups: u64, overflow_sets: usize) -> Result<(Self, BuildReport)> {
        if groups == 0 || overflow_sets > 16 {
            return Err(Error::Invalid("need >= 1 group and <= 16 overflow sets".into()));
        }
        let mut ra = Self {
            groups,
            overflow_sets,
            slots: vec![0; groups as usize * (SETS_PER_GROUP + overflow_sets) * WAYS],
            homes: vec![0; groups as usize * (SETS_PER_GROUP + overflow_sets) * WAYS],
            links: vec![TmrLink::default(); groups as usize * (SETS_PER_GROUP + overflow_sets)],
        };
        let mut rep = BuildReport {
            placed: true,
            words: words.len() as u64,
            unplaced: 0,
            normal_entries: 0,
            overflow_entries: 0,
            overflow_sets_used: 0,
            failed_groups: 0,
        };
        let mut failed = std::collections::BTreeSet::new();
        for &(line, word) in words {
            let (g, s, tag_line) = ra.home(line);
            if line / (groups * SETS_PER_GROUP as u64) >= 64 || word >= 8 {
                return Err(Error::Invalid(format!("line {line} word {word} does not fit the tag")));
            }
            let tag = |overflow: u8| ReplicationTag { line_bits: tag_line, word, valid: true, overflow }.pack();
            if let Some(i) = ra.free_way(g, s) {
                ra.slots[i] = tag(0);
                rep.normal_entries += 1;
                continue;
            }
            match ra.place_overflow(g, s) {
                Some(i) => {
                    ra.slots[i] = tag(1);
                    ra.homes[i] = s as u8;
                    rep.overflow_entries += 1;
                }
                None => {
                    rep.unplaced += 1;
                    failed.insert(g);
                }
            }
        }
        rep.placed = rep.unplaced == 0;
        rep.failed_groups = failed.len() as u64;
        rep.overflow_sets_used = (0..groups)
            .map(|g| (0..overflow_sets).filter(|&o| ra.slots[ra.set_slots(g, SETS_PER_GROUP + o)].iter().any(|&t| t != 0)).count() as u64)
            .sum();
        Ok((ra, rep))
    }

    /// Follow the chain from normal set `s`, extending it in ascending
    /// overflow-set order when the tail is full.
    fn place_overflow(&mut self, g: u64, s: usize) -> Option<usize> {
        let mut cur = s;
        loop {
            match self.links[self.link_index(g, cur)].read() {
                Some(o) => {
                    let set = SETS_PER_GROUP + o as usize;
                    if let Some(i) = self.free_way(g, set) {
                        return Some(i);
                    }
                    cur = set;
                }
                None => {
                    let target = (0..self.overflow_sets).find(|&o| {
                        let set = SETS_PER_GROUP + o;
                        self.free_way(g, set).is_some() && !self.chain_contains(g, s, set)
                    })?;
                    let li = self.link_index(g, cur);
                    self.links[li] = TmrLink::new(Some(target as u8));
                    return self.free_way(g, SETS_PER_GROUP + target);
                }
            }
        }
    }

    fn chain_contains(&self, g: u64, s: usize, set: usize) -> bool {
        let mut cur = s;
        while let Some(o) = self.links[self.link_index(g, cur)].read() {
            let next = SETS_PER_GROUP + o as usize;
            if next == set {
                return true;
            }
            cur = next;
        }
        false
    }

    /// One read for the home set; a second when the overflow region is
    /// consulted (it shares the group's row buffer).
    pub fn lookup(&self, line: u64, word: u8) -> Lookup {
        let (g, s, tag_line) = self.home(line);
        let want = |raw: u16| {
            let t = ReplicationTag::unpack(raw);
            t.valid && t.line_bits == tag_line && t.word == word
        };
        if self.slots[self.set_slots(g, s)].iter().any(|&t| want(t)) {
            return Lookup { hit: true, accesses: 1 };
        }
        let mut cur = s;
        let mut followed = false;
        while let Some(o) = self.links[self.link_index(g, cur)].read() {
            followed = true;
            let set = SETS_PER_GROUP + o as usize;
            if self.set_slots(g, set).any(|i| want(self.slots[i]) && self.homes[i] as usize == s) {
                return Lookup { hit: true, accesses: 2 };
            }
            cur = set;
        }
        Lookup { hit: false, accesses: 1 + followed as u32 }
    }

    /// Reconstruct every stored `(line, word)` from slot position and tag.
    pub fn stored(&self) -> Vec<(u64, u8)> {
        let mut out = Vec::new();
        for g in 0..self.groups {
            for set in 0..self.sets() {
                for i in self.set_slots(g, set) {
                    let t = ReplicationTag::unpack(self.slots[i]);
                    if t.valid {
                        let s = if set < SETS_PER_GROUP { set } else { self.homes[i] as usize };
                        out.push(((t.line_bits as u64 * SETS_PER_GROUP as u64 + s as u64) * self.groups + g, t.word));
                    }
                }
            }
        }
        out.sort();
        out
    }
}

/// A group fails once its overflow entries exceed overflow capacity.
pub fn group_fails(set_loads: &[u32], overflow_sets: usize) -> bool {
    let excess: u32 = set_loads.iter().map(|&c| c.saturating_sub(WAYS as u32)).sum();
    excess as usize > overflow_sets * WAYS
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provision {
    pub capacity_bytes: u64,
    pub expected_faulty_words: f64,
    pub groups: u64,
    pub fault_map_bytes: u64,
    pub replication_bytes: u64,
    pub visible_fraction: f64,
}

/// Size the fault map (4 bits per 64-byte line) and replication area for a
/// memory with ECC-extended 72-bit words.
pub fn archshield_provision(ber: f64, capacity_bytes: u64) -> Result<Provision> {
    if !(0.0..=1.0).contains(&ber) || capacity_bytes < LINE_BYTES {
        return Err(Error::Invalid("ber must lie in [0,1] and capacity >= one line".into()));
    }
    let words = (capacity_bytes / 8) as f64;
    let expected = words * -(72.0 * (-ber).ln_1p()).exp_m1();
    let groups = if expected <= 0.0 {
        0
    } else {
        ((expected / DESIGN_LOAD_PER_GROUP).ceil() as u64).next_power_of_two()
    };
    let fault_map_bytes = capacity_bytes / 128;
    let replication_bytes = groups * GROUP_BYTES;
    Ok(Provision {
        capacity_bytes,
        expected_faulty_words: expected,
        groups,
        fault_map_bytes,
        replication_bytes,
        visible_fraction: 1.0 - (fault_map_bytes + replication_bytes) as f64 / capacity_bytes as f64,
    })
}

/// Per-set overflow distribution when each set's load is Poisson(`mean`):
/// `p_over` = P(load > 6) and the inverse CDF table of (load - 6 | load > 6).
struct ExcessSampler {
    p_over: f64,
    cdf: Vec<f64>,
}

impl ExcessSampler {
    fn new(mean: f64) -> Self {
        let mut pmf = Vec::new();
        let mut p = (-mean).exp();
        for k in 0..400u32 {
            pmf.push(p);
            p *= mean / (k + 1) as f64;
        }
        let p_over: f64 = pmf[WAYS + 1..].iter().sum();
        let mut cdf = Vec::new();
        let mut acc = 0.0;
        for &q in &pmf[WAYS + 1..] {
            acc += q / p_over;
            cdf.push(acc);
            if acc >= 1.0 - 1e-15 {
                break;
            }
        }
        Self { p_over, cdf }
    }

    fn excess(&self, u: f64) -> u32 {
        self.cdf.partition_point(|&c| c < u) as u32 + 1
    }
}

/// Exact probability one group fails, assuming independent Poisson set
/// loads with the given mean.
pub fn group_failure_prob(mean_per_set: f64, overflow_sets: usize) -> f64 {
    let s = ExcessSampler::new(mean_per_set);
    // distribution of a single set's excess, index = excess
    let mut single = vec![1.0 - s.p_over];
    let mut prev = 0.0;
    for &c in &s.cdf {
        single.push((c - prev) * s.p_over);
        prev = c;
    }
    let cap = overflow_sets * WAYS;
    let mut acc = vec![0.0; cap + 2];
    acc[0] = 1.0;
    for _ in 0..SETS_PER_GROUP {
        let mut next = vec![0.0; cap + 2];
        for (a, &pa) in acc.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for (b, &pb) in single.iter().enumerate() {
                let k = (a + b).min(cap + 1);
                next[k] += pa * pb;
            }
        }
        acc = next;
    }
    acc[cap + 1]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverflowPoint {
    pub errors: f64,
    pub overflow_sets: usize,
    pub trials: u64,
    pub failures: u64,
    pub p_fail: f64,
}

/// Monte-Carlo placement-failure probability. `errors` faulty words land
/// uniformly on `groups * 16` sets; per-set loads are drawn as independent
/// Poisson variables (the multinomial over tens of thousands of sets is
/// indistinguishable at these loads). Every overflow-set count is judged on
/// the same sampled loads.
pub fn overflow_curve(errors: &[f64], overflow_sets: &[usize], groups: u64, trials: u64, seed: u64) -> Vec<OverflowPoint> {
    let mut out = Vec::new();
    for (ei, &e) in errors.iter().enumerate() {
        let mean = e / (groups as f64 * SETS_PER_GROUP as f64);
        let sampler = ExcessSampler::new(mean);
        let over = Binomial::new(SETS_PER_GROUP as u64, sampler.p_over.min(1.0)).expect("valid binomial");
        let caps: Vec<u32> = overflow_sets.iter().map(|&o| (o * WAYS) as u32).collect();
        let mut fails = vec![0u64; overflow_sets.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(ei as u64);
        for _ in 0..trials {
            let mut worst = 0u32;
            for _ in 0..groups {
                let k = over.sample(&mut rng);
                let mut sum = 0u32;
                for _ in 0..k {
                    sum += sampler.excess(rng.random::<f64>());
                }
                worst = worst.max(sum);
            }
            for (f, &cap) in fails.iter_mut().zip(&caps) {
                *f += (worst > cap) as u64;
            }
        }
        for (i, &o) in overflow_sets.iter().enumerate() {
            out.push(OverflowPoint { errors: e, overflow_sets: o, trials, failures: fails[i], p_fail: fails[i] as f64 / trials as f64 });
        }
    }
    out
}
