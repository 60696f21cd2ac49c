//! Stacked-memory protection: TSV fault footprints and TSV-SWAP,
//! tri-dimensional parity (3DP), dual-granularity sparing (DDS) and the
//! lifetime rules for Citadel and its comparison schemes.

use crate::error::{Error, Result};
use crate::faultmodel::{
    BitSel, FaultRecord, FitTable, Footprint, Geometry, Granularity, RowSel, Span, TsvTopology, addr_tsv_rows,
    data_tsv_bits, fit_preset, sample_arrivals_rng, tsv_channel_footprint,
};
use crate::simkernel::{EpochReport, EpochVerdict, Scheme, trial_rng};
use rand::RngExt;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Data TSVs per swap set (including the standby).
pub const SET_DATA_TSVS: u32 = 64;
/// Address/command TSVs per swap set.
pub const SET_ADDR_TSVS: u32 = 6;
/// Repairs available per channel in fully-associative mode.
pub const FULLY_ASSOC_REPAIRS: u32 = 8;
pub const RRT_ENTRIES_PER_BANK: usize = 4;
pub const SPARE_BANKS: usize = 2;

// ---------------------------------------------------------------------------
// Organizations

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Organization {
    Hbm,
    Hmc,
    Tezzaron,
}

impl Organization {
    pub const ALL: [Organization; 3] = [Self::Hbm, Self::Hmc, Self::Tezzaron];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Hbm => "hbm",
            Self::Hmc => "hmc",
            Self::Tezzaron => "tezzaron",
        }
    }

    /// 8 data dies of 8 banks. HBM-like stacks give each die its own
    /// channel; HMC- and Tezzaron-like stacks run channel `c` vertically
    /// through bank `c` of every die.
    pub fn geometry(self) -> Geometry {
        let mut g = Geometry::stack_8gb();
        if self != Self::Hbm {
            g.tsv_topology = TsvTopology::ChannelPerBankIndex;
        }
        g
    }

    /// Tezzaron-like dies split each bank over more TSVs per channel, so the
    /// per-channel TSV fault rate doubles.
    pub fn tsv_fit_multiplier(self) -> f64 {
        if self == Self::Tezzaron { 2.0 } else { 1.0 }
    }

    /// Per-die cell-array rates plus `tsv_fit` per channel split over data
    /// and address TSVs.
    pub fn fit_table(self, tsv_fit: f64) -> Result<FitTable> {
        if !(tsv_fit >= 0.0 && tsv_fit.is_finite()) {
            return Err(Error::Config("tsv fit must be finite and >= 0".into()));
        }
        let g = self.geometry();
        Ok(fit_preset("stacked8gb")?.with_tsv_fit(
            tsv_fit * self.tsv_fit_multiplier(),
            g.data_tsvs_per_channel,
            g.addr_tsvs_per_channel,
        ))
    }
}

impl fmt::Display for Organization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Organization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|o| o.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Invalid(format!("unknown organization '{s}'")))
    }
}

// ---------------------------------------------------------------------------
// TSV faults and TSV-SWAP

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TsvId {
    Data(u32),
    Addr(u32),
}

impl TsvId {
    /// Swap set holding this TSV.
    pub fn set(self) -> u32 {
        match self {
            TsvId::Data(i) => i / SET_DATA_TSVS,
            TsvId::Addr(j) => j / SET_ADDR_TSVS,
        }
    }

    pub fn is_standby(self) -> bool {
        matches!(self, TsvId::Data(i) if i % SET_DATA_TSVS == 0)
    }
}

/// Footprint of one faulty TSV of `channel`.
pub fn tsv_fault_footprint(tsv: TsvId, channel: u32, geom: &Geometry) -> Result<Footprint> {
    if channel >= geom.channels {
        return Err(Error::Invalid(format!("channel {channel} out of range")));
    }
    let mut fp = tsv_channel_footprint(geom, channel);
    match tsv {
        TsvId::Data(i) if i < geom.data_tsvs_per_channel => fp.bits = data_tsv_bits(geom, i),
        TsvId::Addr(j) if j < geom.addr_tsvs_per_channel => fp.rows = addr_tsv_rows(geom, j),
        _ => return Err(Error::Invalid(format!("{tsv:?} out of range"))),
    }
    Ok(fp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwapMode {
    None,
    SetBased,
    FullyAssoc,
}

impl SwapMode {
    pub const ALL: [SwapMode; 3] = [Self::None, Self::SetBased, Self::FullyAssoc];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::SetBased => "set",
            Self::FullyAssoc => "full",
        }
    }
}

impl FromStr for SwapMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Invalid(format!("unknown swap mode '{s}'")))
    }
}

/// One swap set of a channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SwapSet {
    pub standby_in_use: bool,
    pub swapped: Option<TsvId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TsvSwapState {
    pub mode: SwapMode,
    /// `sets[channel][set]`.
    pub sets: Vec<Vec<SwapSet>>,
    /// Fully-associative repairs per channel.
    pub repairs: Vec<Vec<TsvId>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SwapResult {
    pub repaired: Vec<TsvId>,
    pub unrepaired: Vec<TsvId>,
}

impl TsvSwapState {
    pub fn new(mode: SwapMode, geom: &Geometry) -> Self {
        let sets = geom.data_tsvs_per_channel.div_ceil(SET_DATA_TSVS) as usize;
        Self {
            mode,
            sets: vec![vec![SwapSet::default(); sets]; geom.channels as usize],
            repairs: vec![Vec::new(); geom.channels as usize],
        }
    }

    /// TSV currently carrying `tsv`'s traffic, if repaired. A repaired
    /// standby maps to itself: its bits come from the replica.
    pub fn route(&self, channel: u32, tsv: TsvId) -> Option<TsvId> {
        match self.mode {
            SwapMode::None => None,
            SwapMode::SetBased => {
                let s = self.sets[channel as usize].get(tsv.set() as usize)?;
                (s.swapped == Some(tsv)).then_some(TsvId::Data(tsv.set() * SET_DATA_TSVS))
            }
            // ideal spare lanes: the repair carries the TSV's own traffic
            SwapMode::FullyAssoc => self.repairs[channel as usize].contains(&tsv).then_some(tsv),
        }
    }
}

/// Repair newly found faulty TSVs of one channel. Faults already repaired
/// are reported as repaired again without consuming capacity.
pub fn tsv_swap(state: &mut TsvSwapState, channel: u32, faulty: &[TsvId]) -> Result<SwapResult> {
    let c = channel as usize;
    if c >= state.sets.len() {
        return Err(Error::Invalid(format!("channel {channel} out of range")));
    }
    let mut out = SwapResult::default();
    for &t in faulty {
        let ok = match state.mode {
            SwapMode::None => false,
            SwapMode::SetBased => match state.sets[c].get_mut(t.set() as usize) {
                None => false,
                Some(s) if s.swapped == Some(t) => true,
                Some(s) if s.standby_in_use => false,
                Some(s) => {
                    s.standby_in_use = true;
                    s.swapped = Some(t);
                    true
                }
            },
            SwapMode::FullyAssoc => {
                let r = &mut state.repairs[c];
                if r.contains(&t) {
                    true
                } else if (r.len() as u32) < FULLY_ASSOC_REPAIRS {
                    r.push(t);
                    true
                } else {
                    false
                }
            }
        };
        if ok { out.repaired.push(t) } else { out.unrepaired.push(t) }
    }
    Ok(out)
}

/// Toy data path of one channel: a line crosses the data TSVs over
/// `burst` beats. Faulty TSVs read as 0 unless swapped; a standby TSV
/// given away (or itself faulty) is served from the metadata replica.
pub fn channel_readback(line: &[u64; 8], geom: &Geometry, faulty: &[TsvId], state: &TsvSwapState, channel: u32) -> [u64; 8] {
    let n = geom.data_tsvs_per_channel;
    let width = (n * geom.burst_length).min(512);
    let get = |b: u32| line[(b / 64) as usize] >> (b % 64) & 1 == 1;
    let mut out = [0u64; 8];
    let standby_busy = |s: u32| match state.mode {
        SwapMode::None => false,
        SwapMode::SetBased => state.sets[channel as usize][(s / SET_DATA_TSVS) as usize].standby_in_use,
        SwapMode::FullyAssoc => state.repairs[channel as usize].contains(&TsvId::Data(s)),
    };
    for b in 0..width {
        let t = b % n;
        let id = TsvId::Data(t);
        let bit = if id.is_standby() && standby_busy(t) {
            // metadata replica
            get(b)
        } else if !faulty.contains(&id) {
            get(b)
        } else {
            match state.route(channel, id) {
                Some(s) if !faulty.contains(&s) || s == id => get(b),
                _ => false,
            }
        };
        if bit {
            out[(b / 64) as usize] |= 1 << (b % 64);
        }
    }
    out
}

/// Probability that some fault stays unrepaired after `k` TSV faults land
/// uniformly over the stack, for k = 1..=max_faults.
pub fn swap_failure_curve(mode: SwapMode, geom: &Geometry, max_faults: u32, trials: u32, seed: u64) -> Vec<(u32, f64)> {
    let per_channel = geom.tsvs_per_channel();
    let mut fails = vec![0u32; max_faults as usize + 1];
    let mut rng = trial_rng(seed, 0);
    for _ in 0..trials {
        let mut st = TsvSwapState::new(mode, geom);
        let mut first_fail = max_faults + 1;
        for k in 1..=max_faults {
            let ch = rng.random_range(0..geom.channels);
            let t = rng.random_range(0..per_channel);
            let id = if t < geom.data_tsvs_per_channel { TsvId::Data(t) } else { TsvId::Addr(t - geom.data_tsvs_per_channel) };
            if tsv_swap(&mut st, ch, &[id]).map(|r| !r.unrepaired.is_empty()).unwrap_or(true) {
                first_fail = k;
                break;
            }
        }
        for f in fails.iter_mut().skip(first_fail as usize) {
            *f += 1;
        }
    }
    (1..=max_faults).map(|k| (k, fails[k as usize] as f64 / trials as f64)).collect()
}

/// Fault count at which the failure curve first reaches `p`.
pub fn faults_tolerated(curve: &[(u32, f64)], p: f64) -> Option<u32> {
    curve.iter().find(|c| c.1 >= p).map(|c| c.0)
}

// ---------------------------------------------------------------------------
// Tri-dimensional parity on a toy stack

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LineAddr {
    pub die: u32,
    pub bank: u32,
    pub row: u32,
    pub col: u32,
}

/// Stack with 64-bit toy lines, row-major by (die, bank, row, col).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyStack {
    pub dies: u32,
    pub banks: u32,
    pub rows: u32,
    pub cols: u32,
    pub lines: Vec<u64>,
}

impl ToyStack {
    pub fn new(dies: u32, banks: u32, rows: u32, cols: u32) -> Self {
        Self { dies, banks, rows, cols, lines: vec![0; (dies * banks * rows * cols) as usize] }
    }

    pub fn idx(&self, a: LineAddr) -> usize {
        (((a.die * self.banks + a.bank) * self.rows + a.row) * self.cols + a.col) as usize
    }

    pub fn addrs(&self) -> impl Iterator<Item = LineAddr> + '_ {
        (0..self.dies).flat_map(move |die| {
            (0..self.banks).flat_map(move |bank| {
                (0..self.rows).flat_map(move |row| (0..self.cols).map(move |col| LineAddr { die, bank, row, col }))
            })
        })
    }
}

/// Dim 1: one parity row per row index across every (die, bank).
/// Dim 2: one parity row per die. Dim 3: one parity row per bank index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityState3DP {
    pub dim1: Vec<u64>,
    pub dim2: Vec<u64>,
    pub dim3: Vec<u64>,
    cols: u32,
}

impl ParityState3DP {
    pub fn compute(s: &ToyStack) -> Self {
        let mut p = Self {
            dim1: vec![0; (s.rows * s.cols) as usize],
            dim2: vec![0; (s.dies * s.cols) as usize],
            dim3: vec![0; (s.banks * s.cols) as usize],
            cols: s.cols,
        };
        for a in s.addrs() {
            p.apply(a, s.lines[s.idx(a)]);
        }
        p
    }

    fn keys(&self, a: LineAddr) -> [usize; 3] {
        [
            (a.row * self.cols + a.col) as usize,
            (a.die * self.cols + a.col) as usize,
            (a.bank * self.cols + a.col) as usize,
        ]
    }

    fn apply(&mut self, a: LineAddr, delta: u64) {
        let [k1, k2, k3] = self.keys(a);
        self.dim1[k1] ^= delta;
        self.dim2[k2] ^= delta;
        self.dim3[k3] ^= delta;
    }
}

/// Read-before-write parity maintenance: all three rows absorb old ^ new.
pub fn parity3dp_update(p: &mut ParityState3DP, stack: &mut ToyStack, a: LineAddr, new_line: u64) {
    let i = stack.idx(a);
    let old = stack.lines[i];
    p.apply(a, old ^ new_line);
    stack.lines[i] = new_line;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrectResult {
    pub corrected: bool,
    pub repaired: Vec<LineAddr>,
}

/// Iterative erasure decoding: any flagged line that is the only flagged
/// member of one of its three parity groups is rebuilt from that group,
/// until nothing changes.
pub fn parity3dp_correct(p: &ParityState3DP, stack: &mut ToyStack, flags: &[bool]) -> CorrectResult {
    let mut bad: Vec<LineAddr> = stack.addrs().filter(|&a| flags[stack.idx(a)]).collect();
    let mut repaired = Vec::new();
    loop {
        let mut count = [
            vec![0u32; p.dim1.len()],
            vec![0u32; p.dim2.len()],
            vec![0u32; p.dim3.len()],
        ];
        for &a in &bad {
            for (d, k) in p.keys(a).into_iter().enumerate() {
                count[d][k] += 1;
            }
        }
        let mut fixed = Vec::new();
        for &a in &bad {
            let keys = p.keys(a);
            if let Some(d) = (0..3).find(|&d| count[d][keys[d]] == 1) {
                fixed.push((a, d));
            }
        }
        if fixed.is_empty() {
            break;
        }
        for (a, d) in fixed {
            let key = p.keys(a)[d];
            let mut v = [&p.dim1, &p.dim2, &p.dim3][d][key];
            for b in stack.addrs() {
                if b != a && p.keys(b)[d] == key {
                    v ^= stack.lines[stack.idx(b)];
                }
            }
            let i = stack.idx(a);
            stack.lines[i] = v;
            repaired.push(a);
            bad.retain(|&x| x != a);
        }
    }
    CorrectResult { corrected: bad.is_empty(), repaired }
}

// ---------------------------------------------------------------------------
// 3DP decodability on footprints

#[derive(Debug, Clone, Copy)]
struct Atom {
    sig: u64,
    n: u64,
}

fn merge_atoms(raw: impl IntoIterator<Item = (u64, u64)>) -> Vec<Atom> {
    let mut m: BTreeMap<u64, u64> = BTreeMap::new();
    for (sig, n) in raw {
        if sig != 0 {
            *m.entry(sig).or_default() += n;
        }
    }
    m.into_iter().map(|(sig, n)| Atom { sig, n }).collect()
}

fn small_axis(universe: u32, fps: &[&Footprint], member: impl Fn(&Footprint, u32) -> bool) -> Vec<Atom> {
    merge_atoms((0..universe).map(|v| {
        let sig = fps.iter().enumerate().filter(|(_, f)| member(f, v)).fold(0u64, |s, (i, _)| s | 1 << i);
        (sig, 1)
    }))
}

fn row_axis(rows: u32, fps: &[&Footprint]) -> Vec<Atom> {
    let sig_of = |r: u32| fps.iter().enumerate().filter(|(_, f)| f.rows.contains(r)).fold(0u64, |s, (i, _)| s | 1 << i);
    if fps.iter().all(|f| matches!(f.rows, RowSel::Span(_))) {
        let mut cuts = vec![0, rows];
        for f in fps {
            if let RowSel::Span(s) = f.rows {
                cuts.push(s.lo.min(rows));
                cuts.push(s.hi.min(rows));
            }
        }
        cuts.sort_unstable();
        cuts.dedup();
        merge_atoms(cuts.windows(2).map(|w| (sig_of(w[0]), (w[1] - w[0]) as u64)))
    } else {
        merge_atoms((0..rows).map(|r| (sig_of(r), 1)))
    }
}

/// Whether 3DP can rebuild every line covered by `fps` (line-granular,
/// die = channel axis). Lines sharing the same fault signature on every
/// axis behave identically, so peeling runs on signature cells.
pub fn parity3dp_decodable(fps: &[&Footprint], geom: &Geometry) -> bool {
    if fps.is_empty() {
        return true;
    }
    if fps.len() > 64 {
        return false;
    }
    let d = small_axis(geom.channels, fps, |f, v| f.channels.contains(v));
    let b = small_axis(geom.banks_per_chip, fps, |f, v| f.banks.contains(v));
    let c = small_axis(geom.cols_per_row, fps, |f, v| f.cols.contains(v));
    let r = row_axis(geom.rows_per_bank, fps);
    // (d, b, r, c) atom indices of faulty cells
    let mut cells: Vec<[usize; 4]> = Vec::new();
    for (di, da) in d.iter().enumerate() {
        for (bi, ba) in b.iter().enumerate() {
            let s2 = da.sig & ba.sig;
            if s2 == 0 {
                continue;
            }
            for (ri, ra) in r.iter().enumerate() {
                let s3 = s2 & ra.sig;
                if s3 == 0 {
                    continue;
                }
                for (ci, ca) in c.iter().enumerate() {
                    if s3 & ca.sig != 0 {
                        cells.push([di, bi, ri, ci]);
                    }
                }
            }
        }
    }
    let nc = c.len();
    loop {
        let mut g1 = vec![0u64; r.len() * nc];
        let mut g2 = vec![0u64; d.len() * nc];
        let mut g3 = vec![0u64; b.len() * nc];
        for &[di, bi, ri, ci] in &cells {
            g1[ri * nc + ci] += d[di].n * b[bi].n;
            g2[di * nc + ci] += b[bi].n * r[ri].n;
            g3[bi * nc + ci] += d[di].n * r[ri].n;
        }
        let before = cells.len();
        cells.retain(|&[di, bi, ri, ci]| !(g1[ri * nc + ci] == 1 || g2[di * nc + ci] == 1 || g3[bi * nc + ci] == 1));
        if cells.is_empty() {
            return true;
        }
        if cells.len() == before {
            return false;
        }
    }
}

// ---------------------------------------------------------------------------
// Dynamic dual-granularity sparing

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RrtEntry {
    pub source_row: u32,
    pub dest_row: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BrtEntry {
    pub die: u32,
    pub bank: u32,
    pub spare: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SparingState {
    pub rrt: BTreeMap<(u32, u32), Vec<RrtEntry>>,
    pub brt: Vec<BrtEntry>,
    next_spare_row: u32,
}

impl SparingState {
    pub fn bank_spared(&self, die: u32, bank: u32) -> bool {
        self.brt.iter().any(|e| e.die == die && e.bank == bank)
    }

    pub fn row_spared(&self, die: u32, bank: u32, row: u32) -> bool {
        self.rrt.get(&(die, bank)).is_some_and(|v| v.iter().any(|e| e.source_row == row))
    }

    pub fn spare_banks_left(&self) -> usize {
        SPARE_BANKS - self.brt.len()
    }
}

/// Faulty rows found in one bank during a scrub. `rows` lists the row IDs
/// when there are few of them; `faulty_rows` is the total.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BankCensus {
    pub die: u32,
    pub bank: u32,
    pub faulty_rows: u32,
    pub rows: Vec<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DdsOutcome {
    pub row_spared: usize,
    pub bank_spared: usize,
    pub exhausted: bool,
    pub spared_banks: Vec<(u32, u32)>,
}

/// Banks whose rows (old RRT entries plus new ones) exceed four take a
/// spare bank; the rest go to the RRT. With no spare bank left the bank
/// stays as it is and `exhausted` is set.
pub fn dds_apply(s: &mut SparingState, census: &[BankCensus]) -> DdsOutcome {
    let mut out = DdsOutcome::default();
    for c in census {
        if c.faulty_rows == 0 || s.bank_spared(c.die, c.bank) {
            continue;
        }
        let existing = s.rrt.get(&(c.die, c.bank)).map_or(&[][..], |v| v.as_slice());
        let fresh: Vec<u32> = if (c.faulty_rows as usize) <= RRT_ENTRIES_PER_BANK && c.rows.len() == c.faulty_rows as usize {
            let mut v: Vec<u32> = c.rows.iter().copied().filter(|r| !existing.iter().any(|e| e.source_row == *r)).collect();
            v.sort_unstable();
            v.dedup();
            v
        } else {
            Vec::new()
        };
        let small = (c.faulty_rows as usize) <= RRT_ENTRIES_PER_BANK && c.rows.len() == c.faulty_rows as usize;
        if small && existing.len() + fresh.len() <= RRT_ENTRIES_PER_BANK {
            let e = s.rrt.entry((c.die, c.bank)).or_default();
            for r in fresh {
                e.push(RrtEntry { source_row: r, dest_row: s.next_spare_row });
                s.next_spare_row += 1;
                out.row_spared += 1;
            }
        } else if s.brt.len() < SPARE_BANKS {
            let spare = s.brt.len() as u8;
            s.brt.push(BrtEntry { die: c.die, bank: c.bank, spare });
            s.rrt.remove(&(c.die, c.bank));
            out.bank_spared += 1;
            out.spared_banks.push((c.die, c.bank));
        } else {
            out.exhausted = true;
        }
    }
    out
}

fn is_small(g: Granularity) -> bool {
    matches!(g, Granularity::Bit | Granularity::Word | Granularity::Row)
}

/// Per-bank faulty-row census of permanent single-die faults.
fn census_of<'a>(faults: impl IntoIterator<Item = &'a FaultRecord>, geom: &Geometry) -> Vec<BankCensus> {
    let mut m: BTreeMap<(u32, u32), (u64, Vec<u32>)> = BTreeMap::new();
    for f in faults {
        let fp = &f.footprint;
        if !f.is_permanent() || fp.channels.len() != 1 {
            continue;
        }
        for bank in fp.banks.lo..fp.banks.hi {
            let e = m.entry((fp.channels.lo, bank)).or_default();
            match (is_small(f.granularity), fp.rows) {
                (true, RowSel::Span(s)) if s.len() == 1 => {
                    if !e.1.contains(&s.lo) {
                        e.1.push(s.lo);
                        e.0 += 1;
                    }
                }
                _ => e.0 += fp.rows.count(geom.rows_per_bank) as u64,
            }
        }
    }
    m.into_iter()
        .map(|((die, bank), (n, rows))| BankCensus { die, bank, faulty_rows: n.min(u32::MAX as u64) as u32, rows })
        .collect()
}

/// Among trials with at least one failed bank (more than four faulty rows
/// from permanent faults over the lifetime), how many banks failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BankFailureCensus {
    pub trials: u64,
    pub with_failure: u64,
    pub one: u64,
    pub two: u64,
    pub three_plus: u64,
}

impl BankFailureCensus {
    pub fn fractions(&self) -> [f64; 3] {
        let n = self.with_failure.max(1) as f64;
        [self.one as f64 / n, self.two as f64 / n, self.three_plus as f64 / n]
    }
}

pub fn bank_failure_census(fit: &FitTable, geom: &Geometry, lifetime_hours: f64, trials: u64, seed: u64) -> BankFailureCensus {
    let mut out = BankFailureCensus { trials, with_failure: 0, one: 0, two: 0, three_plus: 0 };
    for t in 0..trials {
        let mut rng = trial_rng(seed, t);
        let faults = sample_arrivals_rng(fit, geom, lifetime_hours, &mut rng);
        let failed = census_of(&faults, geom).iter().filter(|c| c.faulty_rows as usize > RRT_ENTRIES_PER_BANK).count();
        match failed {
            0 => {}
            1 => out.one += 1,
            2 => out.two += 1,
            _ => out.three_plus += 1,
        }
        out.with_failure += (failed > 0) as u64;
    }
    out
}

/// Faulty-row counts of faulty banks (permanent faults over one lifetime),
/// collected until `banks` samples exist.
pub fn faulty_rows_per_bank(fit: &FitTable, geom: &Geometry, lifetime_hours: f64, banks: usize, seed: u64) -> Vec<u32> {
    let mut out = Vec::with_capacity(banks);
    let mut t = 0u64;
    while out.len() < banks {
        let mut rng = trial_rng(seed, t);
        t += 1;
        let faults = sample_arrivals_rng(fit, geom, lifetime_hours, &mut rng);
        out.extend(census_of(&faults, geom).iter().map(|c| c.faulty_rows));
    }
    out.truncate(banks);
    out
}

// ---------------------------------------------------------------------------
// Lifetime rules

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CitadelScheme {
    SameBank,
    Stripe,
    ThreeDp,
    ThreeDpDds,
    Raid5,
    SixEcSevenEd,
}

impl CitadelScheme {
    pub const ALL: [CitadelScheme; 6] = [
        Self::SameBank,
        Self::Stripe,
        Self::ThreeDp,
        Self::ThreeDpDds,
        Self::Raid5,
        Self::SixEcSevenEd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::SameBank => "same-bank",
            Self::Stripe => "stripe",
            Self::ThreeDp => "3dp",
            Self::ThreeDpDds => "3dp-dds",
            Self::Raid5 => "raid5",
            Self::SixEcSevenEd => "6ec7ed",
        }
    }
}

impl FromStr for CitadelScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Invalid(format!("unknown citadel scheme '{s}'")))
    }
}

/// Probability that a 6EC7ED BCH decoder (61 check bits over a 512-bit
/// line) miscorrects a heavy error pattern: volume of radius-6 balls over
/// the syndrome space.
pub fn six_ec_miscorrect_prob() -> f64 {
    let n = 512.0 + 61.0;
    let mut vol = 0.0;
    let mut term = 1.0;
    for i in 0..=6 {
        if i > 0 {
            term *= (n - (i as f64 - 1.0)) / i as f64;
        }
        vol += term;
    }
    vol / 2f64.powi(61)
}

/// 8-bit symbols per 512-bit line for the same-bank symbol code.
const SYMBOL_BITS: u32 = 8;
/// Per-die slice of a line striped across eight dies.
const STRIPE_SLICE_BITS: u32 = 64;

pub struct CitadelSystem {
    pub scheme: CitadelScheme,
    pub org: Organization,
    pub swap: SwapMode,
    pub geometry: Geometry,
    sdc_6ec: f64,
}

#[derive(Debug, Clone)]
pub struct CitadelState {
    pub swap: TsvSwapState,
    pub sparing: SparingState,
    seen: Vec<u32>,
    repaired: Vec<u32>,
}

impl CitadelSystem {
    pub fn new(scheme: CitadelScheme, org: Organization, swap: SwapMode) -> Self {
        Self { scheme, org, swap, geometry: org.geometry(), sdc_6ec: six_ec_miscorrect_prob() }
    }

    fn tsv_channel(&self, f: &FaultRecord) -> u32 {
        match self.geometry.tsv_topology {
            TsvTopology::ChannelPerDie => f.footprint.channels.lo,
            TsvTopology::ChannelPerBankIndex => f.footprint.banks.lo,
        }
    }

    /// First fault the scheme cannot handle, with a cause.
    fn judge(&self, live: &[&FaultRecord]) -> EpochReport {
        let w = self.geometry.bits_per_chip_per_access;
        match self.scheme {
            CitadelScheme::ThreeDp | CitadelScheme::ThreeDpDds => {
                let fps: Vec<&Footprint> = live.iter().map(|f| &f.footprint).collect();
                if parity3dp_decodable(&fps, &self.geometry) {
                    EpochReport::ok()
                } else {
                    EpochReport::due("3dp-unrecoverable")
                }
            }
            CitadelScheme::SameBank => {
                for (i, f) in live.iter().enumerate() {
                    let s = f.footprint.bits.symbols(w, SYMBOL_BITS);
                    if s.count_ones() > 1 {
                        return EpochReport::due(format!("multi-symbol {}", f.granularity));
                    }
                    for g in &live[..i] {
                        let t = g.footprint.bits.symbols(w, SYMBOL_BITS);
                        if f.footprint.channels.intersects(&g.footprint.channels)
                            && f.footprint.shares_address(&g.footprint)
                            && s != t
                        {
                            return EpochReport::due("two symbols in one line");
                        }
                    }
                }
                EpochReport::ok()
            }
            CitadelScheme::Stripe => {
                for (i, f) in live.iter().enumerate() {
                    if f.footprint.channels.len() > 1 {
                        return EpochReport::due(format!("multi-die {}", f.granularity));
                    }
                    let s = f.footprint.bits.symbols(w, STRIPE_SLICE_BITS);
                    for g in &live[..i] {
                        if f.footprint.channels != g.footprint.channels
                            && f.footprint.shares_address(&g.footprint)
                            && s & g.footprint.bits.symbols(w, STRIPE_SLICE_BITS) != 0
                        {
                            return EpochReport::due("two dies in one codeword");
                        }
                    }
                }
                EpochReport::ok()
            }
            CitadelScheme::Raid5 => {
                for (i, f) in live.iter().enumerate() {
                    if f.footprint.banks.len() > 1 {
                        return EpochReport::due(format!("multi-bank {}", f.granularity));
                    }
                    for g in &live[..i] {
                        let (a, b) = (&f.footprint, &g.footprint);
                        if a.channels.intersects(&b.channels)
                            && !a.banks.intersects(&b.banks)
                            && a.rows.intersects(&b.rows)
                            && a.cols.intersects(&b.cols)
                        {
                            return EpochReport::due("two banks in one stripe");
                        }
                    }
                }
                EpochReport::ok()
            }
            CitadelScheme::SixEcSevenEd => {
                for f in live {
                    let bad: u32 = live
                        .iter()
                        .filter(|g| g.footprint.channels.intersects(&f.footprint.channels) && g.footprint.shares_address(&f.footprint))
                        .map(|g| g.footprint.bits.count(w))
                        .sum();
                    if bad > 6 {
                        return if bad > 7 && f.sub_draw(7) < self.sdc_6ec {
                            EpochReport::sdc("6ec7ed miscorrection")
                        } else {
                            EpochReport::due(format!("{bad} bad bits"))
                        };
                    }
                }
                EpochReport::ok()
            }
        }
    }

    /// Permanent faults DDS can take out of service after a clean epoch.
    fn spare(&self, st: &mut SparingState, live: &[&FaultRecord]) -> Vec<u32> {
        let census = census_of(live.iter().copied(), &self.geometry);
        dds_apply(st, &census);
        live.iter()
            .filter(|f| f.is_permanent() && self.covered_by_sparing(st, f))
            .map(|f| f.index)
            .collect()
    }

    fn covered_by_sparing(&self, st: &SparingState, f: &FaultRecord) -> bool {
        let fp = &f.footprint;
        if fp.channels.len() != 1 {
            return false;
        }
        let die = fp.channels.lo;
        (fp.banks.lo..fp.banks.hi).all(|b| {
            st.bank_spared(die, b)
                || (is_small(f.granularity)
                    && matches!(fp.rows, RowSel::Span(s) if s.len() == 1 && st.row_spared(die, b, s.lo)))
        })
    }
}

impl Scheme for CitadelSystem {
    type State = CitadelState;

    fn name(&self) -> String {
        self.scheme.as_str().to_string()
    }

    fn init_state(&self) -> CitadelState {
        CitadelState {
            swap: TsvSwapState::new(self.swap, &self.geometry),
            sparing: SparingState::default(),
            seen: Vec::new(),
            repaired: Vec::new(),
        }
    }

    fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    fn classify_epoch(&self, st: &mut CitadelState, active: &[FaultRecord], _: u64) -> EpochReport {
        for f in active {
            if !f.granularity.is_tsv() || st.seen.contains(&f.index) {
                continue;
            }
            st.seen.push(f.index);
            let i = f.tsv_index.unwrap_or(0);
            let id = if f.granularity == Granularity::DataTsv { TsvId::Data(i) } else { TsvId::Addr(i) };
            if let Ok(r) = tsv_swap(&mut st.swap, self.tsv_channel(f), &[id])
                && r.unrepaired.is_empty()
            {
                st.repaired.push(f.index);
            }
        }
        let dds = self.scheme == CitadelScheme::ThreeDpDds;
        let live: Vec<&FaultRecord> = active
            .iter()
            .filter(|f| !st.repaired.contains(&f.index) && !(dds && self.covered_by_sparing(&st.sparing, f)))
            .collect();
        let mut report = self.judge(&live);
        if report.verdict == EpochVerdict::Ok {
            report.retire = st.repaired.clone();
            if dds {
                report.retire.extend(self.spare(&mut st.sparing, &live));
            }
        }
        report
    }
}

/// Cell-array faults of the stack only, for building scripted scenarios.
pub fn stack_fault(index: u32, g: Granularity, permanent: bool, time_hours: f64, footprint: Footprint) -> FaultRecord {
    FaultRecord {
        index,
        granularity: g,
        permanence: if permanent { crate::faultmodel::Permanence::Permanent } else { crate::faultmodel::Permanence::Transient },
        time_hours,
        footprint,
        draw: 0.5,
        tsv_index: None,
    }
}

/// Footprint of a whole bank of one die.
pub fn bank_footprint(geom: &Geometry, die: u32, bank: u32) -> Footprint {
    Footprint {
        channels: Span::one(die),
        ranks: Span::one(0),
        chip: 0,
        banks: Span::one(bank),
        rows: RowSel::Span(Span::all(geom.rows_per_bank)),
        cols: Span::all(geom.cols_per_row),
        bits: BitSel::All,
    }
}

/// Footprint of one row of one bank.
pub fn row_footprint(geom: &Geometry, die: u32, bank: u32, row: u32) -> Footprint {
    Footprint { rows: RowSel::Span(Span::one(row)), ..bank_footprint(geom, die, bank) }
}
