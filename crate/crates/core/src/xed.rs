//! Catch-word protocol: per-chip On-Die ECC, DIMM-level RAID-3 parity,
//! fault diagnosis, erasure-mode Double-Chipkill and the lifetime rules for
//! the five DIMM protection schemes.

use crate::codes::{BitBlock, Codec, CodecId, CodecStatus, ErrorMode, parity_u64, probe_codec};
use crate::error::{Error, Result};
use crate::faultmodel::{FaultRecord, Footprint, Geometry, Granularity};
use crate::simkernel::{EpochReport, Scheme};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

pub const DATA_CHIPS: usize = 8;
pub const CHIPS: usize = 9;
pub const LINES_PER_ROW: usize = 128;
/// Lines a chip must fail in one row to be blamed by inter-line diagnosis
/// (more than 10% of 128).
pub const INTERLINE_THRESHOLD: usize = 13;
pub const FCT_ENTRIES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChipState {
    pub xed_enable: bool,
    pub cwr: u64,
    pub ondie: CodecId,
    pub marked_faulty: bool,
}

/// DC-Mux output of one chip for one stored On-Die codeword.
pub fn chip_respond(chip: &ChipState, codec: &dyn Codec, stored: &BitBlock) -> u64 {
    let (data, verdict) = codec.decode(stored).expect("on-die codeword width");
    if !chip.xed_enable || verdict.status == CodecStatus::Clean {
        data.as_u64()
    } else {
        chip.cwr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transfer {
    pub values: [u64; CHIPS],
    pub catchword: [bool; CHIPS],
}

impl Transfer {
    pub fn new(values: [u64; CHIPS], chips: &[ChipState; CHIPS]) -> Self {
        Self { values, catchword: std::array::from_fn(|i| values[i] == chips[i].cwr) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReadOutcome {
    Ok,
    Corrected,
    Due,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadResult {
    pub data: [u64; DATA_CHIPS],
    pub outcome: ReadOutcome,
}

/// Faulty-Row Chip Tracker.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Fct {
    pub entries: Vec<(u32, u8)>,
}

impl Fct {
    pub fn lookup(&self, row: u32) -> Option<usize> {
        self.entries.iter().find(|e| e.0 == row).map(|e| e.1 as usize)
    }

    /// Record a diagnosed row. Returns true when the chip should be marked
    /// faulty: the table is full, every entry blames this chip and yet
    /// another row of it has failed.
    pub fn record(&mut self, row: u32, chip: usize) -> bool {
        if self.lookup(row).is_some() {
            return false;
        }
        if self.entries.len() < FCT_ENTRIES {
            self.entries.push((row, chip as u8));
            return false;
        }
        self.entries.iter().all(|e| e.1 as usize == chip)
    }
}

#[derive(Debug, Clone)]
struct Cell {
    stored: BitBlock,
    stuck_mask: BitBlock,
    stuck_val: BitBlock,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DimmStats {
    pub collisions: u64,
    pub serial_reads: u64,
    pub interline_runs: u64,
    pub intraline_runs: u64,
}

/// One ECC-DIMM rank of eight data chips and a parity chip, with a small
/// backing store so every read goes through the real codecs.
pub struct DimmState {
    pub chips: [ChipState; CHIPS],
    pub fct: Fct,
    pub stats: DimmStats,
    codec: Box<dyn Codec>,
    lines: Vec<[Cell; CHIPS]>,
    rng: ChaCha8Rng,
}

impl DimmState {
    pub fn new(ondie: CodecId, rows: usize, seed: u64) -> Result<Self> {
        let codec = ondie.build();
        if codec.data_width() != 64 {
            return Err(Error::Invalid(format!("{ondie} is not a 64-bit on-die code")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chips = std::array::from_fn(|_| ChipState { xed_enable: true, cwr: rng.random(), ondie, marked_faulty: false });
        let n = codec.code_width();
        let zero = codec.encode(&BitBlock::zeros(64))?;
        let blank = Cell { stored: zero, stuck_mask: BitBlock::zeros(n), stuck_val: BitBlock::zeros(n) };
        let lines = (0..rows.max(1) * LINES_PER_ROW).map(|_| std::array::from_fn(|_| blank.clone())).collect();
        Ok(Self { chips, fct: Fct::default(), stats: DimmStats::default(), codec, lines, rng })
    }

    pub fn lines(&self) -> usize {
        self.lines.len()
    }

    pub fn codec(&self) -> &dyn Codec {
        self.codec.as_ref()
    }

    fn raw(&self, addr: usize, chip: usize) -> BitBlock {
        let c = &self.lines[addr][chip];
        let mut cw = c.stored.clone();
        for i in c.stuck_mask.ones_iter() {
            cw.set(i, c.stuck_val.get(i));
        }
        cw
    }

    fn store(&mut self, addr: usize, chip: usize, value: u64) {
        self.lines[addr][chip].stored = self.codec.encode(&BitBlock::from_u64(value, 64)).expect("64-bit payload");
    }

    pub fn write(&mut self, addr: usize, data: [u64; DATA_CHIPS]) {
        for (i, &d) in data.iter().enumerate() {
            self.store(addr, i, d);
        }
        self.store(addr, DATA_CHIPS, parity_u64(&data));
    }

    /// Flip stored codeword bits; cleared by the next write.
    pub fn inject_transient(&mut self, addr: usize, chip: usize, bits: &[usize]) {
        for &b in bits {
            self.lines[addr][chip].stored.flip(b);
        }
    }

    /// Stuck-at faults that survive writes.
    pub fn inject_stuck(&mut self, addr: usize, chip: usize, bits: &[usize], value: bool) {
        for &b in bits {
            let c = &mut self.lines[addr][chip];
            c.stuck_mask.set(b, true);
            c.stuck_val.set(b, value);
        }
    }

    /// Stuck bits such that the word reads back with every listed bit
    /// inverted relative to what is stored now.
    pub fn inject_stuck_flip(&mut self, addr: usize, chip: usize, bits: &[usize]) {
        for &b in bits {
            let v = !self.raw(addr, chip).get(b);
            self.inject_stuck(addr, chip, &[b], v);
        }
    }

    fn respond_all(&self, addr: usize, enable: bool) -> [u64; CHIPS] {
        std::array::from_fn(|i| {
            let chip = ChipState { xed_enable: enable && self.chips[i].xed_enable, ..self.chips[i].clone() };
            chip_respond(&chip, self.codec.as_ref(), &self.raw(addr, i))
        })
    }

    pub fn transfer(&self, addr: usize) -> Transfer {
        Transfer::new(self.respond_all(addr, true), &self.chips)
    }

    pub fn read(&mut self, addr: usize) -> ReadResult {
        let t = self.transfer(addr);
        controller_receive(self, addr, t)
    }

    fn rotate_catchwords(&mut self) {
        for c in &mut self.chips {
            c.cwr = self.rng.random();
        }
    }
}

fn reconstruct(values: &[u64; CHIPS], chip: usize) -> u64 {
    (0..CHIPS).filter(|&i| i != chip).fold(0, |acc, i| acc ^ values[i])
}

fn parity_ok(values: &[u64; CHIPS]) -> bool {
    values.iter().fold(0, |a, v| a ^ v) == 0
}

fn data_of(values: &[u64; CHIPS]) -> [u64; DATA_CHIPS] {
    std::array::from_fn(|i| values[i])
}

/// Memory-controller handling of one transfer.
pub fn controller_receive(dimm: &mut DimmState, addr: usize, t: Transfer) -> ReadResult {
    let erasures: Vec<usize> = (0..CHIPS).filter(|&i| t.catchword[i] || dimm.chips[i].marked_faulty).collect();
    let mut values = t.values;
    match erasures.len() {
        0 if parity_ok(&values) => ReadResult { data: data_of(&values), outcome: ReadOutcome::Ok },
        0 => diagnose_and_fix(dimm, addr, values),
        1 => {
            let e = erasures[0];
            values[e] = reconstruct(&values, e);
            if !dimm.chips[e].marked_faulty && collision_check_and_rotate(dimm, values[e], e) {
                return ReadResult { data: data_of(&values), outcome: ReadOutcome::Ok };
            }
            ReadResult { data: data_of(&values), outcome: ReadOutcome::Corrected }
        }
        _ => serial_mode_scaling_fix(dimm, addr),
    }
}

/// A clean word equal to the chip's catch-word is indistinguishable from an
/// error signal. Detected after reconstruction; a fresh catch-word is drawn
/// for every chip.
pub fn collision_check_and_rotate(dimm: &mut DimmState, value: u64, chip: usize) -> bool {
    if value != dimm.chips[chip].cwr {
        return false;
    }
    dimm.stats.collisions += 1;
    dimm.rotate_catchwords();
    true
}

/// Re-read with XED disabled so each chip's On-Die ECC corrects its own
/// single-bit faults, then check DIMM parity.
pub fn serial_mode_scaling_fix(dimm: &mut DimmState, addr: usize) -> ReadResult {
    dimm.stats.serial_reads += 1;
    let mut values = dimm.respond_all(addr, false);
    let marked: Vec<usize> = (0..CHIPS).filter(|&i| dimm.chips[i].marked_faulty).collect();
    match marked.len() {
        0 if parity_ok(&values) => ReadResult { data: data_of(&values), outcome: ReadOutcome::Corrected },
        0 => diagnose_and_fix(dimm, addr, values),
        1 => {
            values[marked[0]] = reconstruct(&values, marked[0]);
            ReadResult { data: data_of(&values), outcome: ReadOutcome::Corrected }
        }
        _ => ReadResult { data: data_of(&values), outcome: ReadOutcome::Due },
    }
}

fn diagnose_and_fix(dimm: &mut DimmState, addr: usize, mut values: [u64; CHIPS]) -> ReadResult {
    let row = (addr / LINES_PER_ROW) as u32;
    let chip = match dimm.fct.lookup(row) {
        Some(c) => Some(c),
        None => match interline_diagnosis(dimm, row) {
            Some(c) => {
                if dimm.fct.record(row, c) {
                    dimm.chips[c].marked_faulty = true;
                }
                Some(c)
            }
            None => intraline_diagnosis(dimm, addr, &values),
        },
    };
    match chip {
        Some(c) => {
            values[c] = reconstruct(&values, c);
            let data = data_of(&values);
            dimm.write(addr, data);
            ReadResult { data, outcome: ReadOutcome::Corrected }
        }
        None => ReadResult { data: data_of(&values), outcome: ReadOutcome::Due },
    }
}

/// Stream the whole row and blame the unique chip that raised catch-words on
/// more than 10% of its lines.
pub fn interline_diagnosis(dimm: &mut DimmState, row: u32) -> Option<usize> {
    dimm.stats.interline_runs += 1;
    let mut counts = [0usize; CHIPS];
    let base = row as usize * LINES_PER_ROW;
    for addr in base..(base + LINES_PER_ROW).min(dimm.lines()) {
        let t = dimm.transfer(addr);
        for (c, &cw) in t.catchword.iter().enumerate() {
            counts[c] += cw as usize;
        }
    }
    let blamed: Vec<usize> = (0..CHIPS).filter(|&c| !dimm.chips[c].marked_faulty && counts[c] >= INTERLINE_THRESHOLD).collect();
    (blamed.len() == 1).then(|| blamed[0])
}

/// Write all-zeros then all-ones into the line and read each back; a chip
/// that cannot hold both patterns has a permanent fault. `values` is the
/// line content to restore afterwards.
pub fn intraline_diagnosis(dimm: &mut DimmState, addr: usize, values: &[u64; CHIPS]) -> Option<usize> {
    dimm.stats.intraline_runs += 1;
    let mut bad = [false; CHIPS];
    for pattern in [0u64, u64::MAX] {
        for c in 0..CHIPS {
            dimm.store(addr, c, pattern);
        }
        let t = dimm.transfer(addr);
        for c in 0..CHIPS {
            bad[c] |= t.values[c] != pattern;
        }
    }
    for (c, &v) in values.iter().enumerate() {
        dimm.store(addr, c, v);
    }
    let blamed: Vec<usize> = (0..CHIPS).filter(|&c| bad[c]).collect();
    (blamed.len() == 1).then(|| blamed[0])
}

/// Arithmetic in GF(2^8) with primitive polynomial 0x11d.
mod gf {
    pub struct Tables {
        pub exp: [u8; 512],
        pub log: [u8; 256],
    }

    const fn build() -> Tables {
        let mut exp = [0u8; 512];
        let mut log = [0u8; 256];
        let mut x: u16 = 1;
        let mut i = 0;
        while i < 255 {
            exp[i] = x as u8;
            log[x as usize] = i as u8;
            x <<= 1;
            if x & 0x100 != 0 {
                x ^= 0x11d;
            }
            i += 1;
        }
        while i < 512 {
            exp[i] = exp[i - 255];
            i += 1;
        }
        Tables { exp, log }
    }

    pub static T: Tables = build();

    pub fn mul(a: u8, b: u8) -> u8 {
        if a == 0 || b == 0 {
            return 0;
        }
        T.exp[T.log[a as usize] as usize + T.log[b as usize] as usize]
    }

    pub fn div(a: u8, b: u8) -> u8 {
        assert!(b != 0, "division by zero in GF(256)");
        if a == 0 {
            return 0;
        }
        T.exp[T.log[a as usize] as usize + 255 - T.log[b as usize] as usize]
    }

    pub fn alpha(i: usize) -> u8 {
        T.exp[i % 255]
    }
}

pub const DCK_SYMBOLS: usize = 18;
pub const DCK_DATA: usize = 16;

fn dck_syndromes(cw: &[u8; DCK_SYMBOLS]) -> (u8, u8) {
    cw.iter().enumerate().fold((0, 0), |(s0, s1), (i, &c)| (s0 ^ c, s1 ^ gf::mul(gf::alpha(i), c)))
}

/// Two check symbols at positions 16 and 17 such that
/// sum(c_i) = 0 and sum(alpha^i c_i) = 0.
pub fn dck_encode(data: &[u8; DCK_DATA]) -> [u8; DCK_SYMBOLS] {
    let mut cw = [0u8; DCK_SYMBOLS];
    cw[..DCK_DATA].copy_from_slice(data);
    let (s0, s1) = dck_syndromes(&cw);
    let (a, b) = (gf::alpha(16), gf::alpha(17));
    let c17 = gf::div(s1 ^ gf::mul(a, s0), a ^ b);
    cw[16] = s0 ^ c17;
    cw[17] = c17;
    cw
}

/// Solve for up to two erased symbols in place. With one erasure the spare
/// syndrome is used as a consistency check.
pub fn dck_erasure_decode(cw: &mut [u8; DCK_SYMBOLS], erased: &[usize]) -> bool {
    for &e in erased {
        cw[e] = 0;
    }
    let (s0, s1) = dck_syndromes(cw);
    match *erased {
        [] => s0 == 0 && s1 == 0,
        [a] => {
            cw[a] = s0;
            gf::mul(gf::alpha(a), s0) == s1
        }
        [a, b] if a != b => {
            let (xa, xb) = (gf::alpha(a), gf::alpha(b));
            let eb = gf::div(s1 ^ gf::mul(xa, s0), xa ^ xb);
            cw[b] = eb;
            cw[a] = s0 ^ eb;
            true
        }
        _ => false,
    }
}

/// Locate and fix one unknown bad symbol.
fn dck_correct_single(cw: &mut [u8; DCK_SYMBOLS]) -> bool {
    let (s0, s1) = dck_syndromes(cw);
    if s0 == 0 && s1 == 0 {
        return true;
    }
    if s0 == 0 || s1 == 0 {
        return false;
    }
    let pos = (gf::T.log[gf::div(s1, s0) as usize]) as usize;
    if pos >= DCK_SYMBOLS {
        return false;
    }
    cw[pos] ^= s0;
    true
}

/// Encode 16 data chips' 32-bit words into an 18-chip x4 rank: byte k of
/// each chip word forms codeword k.
pub fn dck_encode_rank(data: &[u32; DCK_DATA]) -> [u32; DCK_SYMBOLS] {
    let mut out = [0u32; DCK_SYMBOLS];
    for k in 0..4 {
        let d: [u8; DCK_DATA] = std::array::from_fn(|i| (data[i] >> (8 * k)) as u8);
        for (i, s) in dck_encode(&d).iter().enumerate() {
            out[i] |= (*s as u32) << (8 * k);
        }
    }
    out
}

/// Chips that raised catch-words are erasures: up to two are rebuilt from
/// the two check symbols of every codeword; without erasures a single bad
/// symbol is located and corrected.
pub fn erasure_double_chipkill(rank: &[u32; DCK_SYMBOLS], flags: &[bool; DCK_SYMBOLS]) -> ([u32; DCK_DATA], ReadOutcome) {
    let erased: Vec<usize> = (0..DCK_SYMBOLS).filter(|&i| flags[i]).collect();
    let mut out = [0u32; DCK_DATA];
    if erased.len() > 2 {
        return (std::array::from_fn(|i| rank[i]), ReadOutcome::Due);
    }
    let mut outcome = if erased.is_empty() { ReadOutcome::Ok } else { ReadOutcome::Corrected };
    for k in 0..4 {
        let mut cw: [u8; DCK_SYMBOLS] = std::array::from_fn(|i| (rank[i] >> (8 * k)) as u8);
        let before = cw;
        let ok = if erased.is_empty() { dck_correct_single(&mut cw) } else { dck_erasure_decode(&mut cw, &erased) };
        if !ok {
            outcome = ReadOutcome::Due;
        } else if erased.is_empty() && cw != before && outcome == ReadOutcome::Ok {
            outcome = ReadOutcome::Corrected;
        }
        for i in 0..DCK_DATA {
            out[i] |= (cw[i] as u32) << (8 * k);
        }
    }
    (out, outcome)
}

/// Expected time between catch-word collisions, `2^width` writes apart.
pub fn collision_expected_hours(width_bits: u32, write_interval_ns: f64) -> f64 {
    2f64.powi(width_bits as i32) * write_interval_ns * 1e-9 / 3600.0
}

/// Probability that at least two of `chips` chips hold a faulty bit among
/// their `bits_per_chip` bits of one access.
pub fn multi_catchword_prob(ber: f64, chips: u32, bits_per_chip: u32) -> f64 {
    let p = -((bits_per_chip as f64) * (-ber).ln_1p()).exp_m1();
    let n = chips as i32;
    let none = (1.0 - p).powi(n);
    let one = n as f64 * p * (1.0 - p).powi(n - 1);
    (1.0 - none - one).max(0.0)
}

/// Probability that scaling faults alone push one chip over the inter-line
/// threshold in a 128-line row.
pub fn interline_false_id_prob(ber: f64, bits_per_word: u32) -> f64 {
    let p = -((bits_per_word as f64) * (-ber).ln_1p()).exp_m1();
    let n = LINES_PER_ROW as u64;
    let ln_c = |k: u64| -> f64 { (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum() };
    (INTERLINE_THRESHOLD as u64..=n).map(|k| (ln_c(k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()).sum()
}

/// Probability of an uncorrectable transient word fault over `hours` in
/// `chips` chips: the fault must arrive and escape On-Die detection.
pub fn word_due_analytic(word_fit: f64, chips: u32, hours: f64, miss: f64) -> f64 {
    -(-(word_fit * chips as f64 * hours * 1e-9)).exp_m1() * miss
}

/// Measured On-Die code behaviour used by the lifetime rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OnDieRates {
    /// Worst undetected fraction of random k-bit patterns, k = 2..=8.
    pub random_miss: f64,
    /// Worst undetected fraction of k-bit bursts, k = 2..=8.
    pub burst_miss: f64,
    /// Fraction of random 8-bit patterns the DIMM-level Hamming code lets
    /// through silently (undetected or miscorrected).
    pub dimm_sdc: f64,
}

pub const RATE_PROBE_TRIALS: u64 = 200_000;

impl OnDieRates {
    pub fn measure(codec: CodecId, trials: u64, seed: u64) -> Result<Self> {
        let mut random_miss: f64 = 0.0;
        let mut burst_miss: f64 = 0.0;
        for k in 2..=8 {
            let r = probe_codec(codec.build().as_ref(), k, ErrorMode::Random, trials, seed ^ k as u64)?;
            random_miss = random_miss.max(1.0 - r.detected_fraction);
            let b = probe_codec(codec.build().as_ref(), k, ErrorMode::Burst, 0, seed)?;
            burst_miss = burst_miss.max(1.0 - b.detected_fraction);
        }
        let h = probe_codec(CodecId::Hamming7264.build().as_ref(), 8, ErrorMode::Random, trials, seed)?;
        let dimm_sdc = (h.patterns - h.detected + h.miscorrected) as f64 / h.patterns as f64;
        Ok(Self { random_miss, burst_miss, dimm_sdc })
    }

    /// Rates for the given On-Die code, measured once per process.
    pub fn cached(codec: CodecId) -> Self {
        static CELLS: [OnceLock<OnDieRates>; 4] = [const { OnceLock::new() }; 4];
        let i = CodecId::ALL.iter().position(|&c| c == codec).expect("known codec");
        *CELLS[i].get_or_init(|| Self::measure(codec, RATE_PROBE_TRIALS, 0x0d1e).expect("probe of a built-in codec"))
    }

    fn miss(&self, g: Granularity) -> f64 {
        if g == Granularity::Word { self.random_miss } else { self.burst_miss }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum XedSchemeKind {
    EccDimm,
    Xed,
    Chipkill,
    XedOnChipkill,
    DoubleChipkill,
}

impl XedSchemeKind {
    pub const ALL: [Self; 5] = [Self::EccDimm, Self::Xed, Self::Chipkill, Self::XedOnChipkill, Self::DoubleChipkill];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::EccDimm => "eccdimm",
            Self::Xed => "xed",
            Self::Chipkill => "chipkill",
            Self::XedOnChipkill => "xed-chipkill",
            Self::DoubleChipkill => "double-chipkill",
        }
    }

    /// x8 ECC-DIMMs for SECDED and XED, x4 ranks of 18 chips otherwise.
    pub fn geometry(self) -> Geometry {
        match self {
            Self::EccDimm | Self::Xed => Geometry::dimm_x8(),
            _ => Geometry::dimm_x4(),
        }
    }
}

impl fmt::Display for XedSchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for XedSchemeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Invalid(format!("unknown XED scheme '{s}'")))
    }
}

/// Probability that three or more bad symbols escape a single-chipkill
/// code's detection.
pub const CHIPKILL_MULTI_SYMBOL_MISS: f64 = 1.0 / 256.0;

/// Lifetime rules for the five DIMM schemes.
pub struct XedSystem {
    pub kind: XedSchemeKind,
    pub geometry: Geometry,
    pub rates: OnDieRates,
    pub scaling_ber: f64,
}

/// One chip-local error as the rules see it.
#[derive(Debug, Clone, Copy)]
struct ChipError {
    fp: Footprint,
    granularity: Granularity,
    transient: bool,
    /// More than one bad bit in a chip word.
    multi: bool,
    /// Caught by the chip's On-Die code.
    detected: bool,
    /// Exactly two bad bits (bit fault meeting a scaling fault or another
    /// bit fault).
    double_bit: bool,
    draw: f64,
}

impl XedSystem {
    pub fn new(kind: XedSchemeKind, rates: OnDieRates, scaling_ber: f64) -> Self {
        Self { kind, geometry: kind.geometry(), rates, scaling_ber }
    }

    /// Default On-Die code is CRC8-ATM.
    pub fn standard(kind: XedSchemeKind, scaling_ber: f64) -> Self {
        Self::new(kind, OnDieRates::cached(CodecId::Crc8Atm), scaling_ber)
    }

    fn errors(&self, active: &[FaultRecord]) -> Vec<ChipError> {
        let w = self.geometry.bits_per_chip_per_access;
        let q_scale = if self.scaling_ber > 0.0 { -((w - 1) as f64 * (-self.scaling_ber).ln_1p()).exp_m1() } else { 0.0 };
        let mut out = Vec::with_capacity(active.len());
        for f in active {
            let transient = !f.is_permanent();
            if f.granularity == Granularity::Bit {
                let upgraded = f.sub_draw(1) < q_scale;
                out.push(ChipError {
                    fp: f.footprint,
                    granularity: f.granularity,
                    transient,
                    multi: upgraded,
                    detected: true,
                    double_bit: upgraded,
                    draw: f.sub_draw(2),
                });
            } else {
                out.push(ChipError {
                    fp: f.footprint,
                    granularity: f.granularity,
                    transient,
                    multi: true,
                    detected: f.draw >= self.rates.miss(f.granularity),
                    double_bit: false,
                    draw: f.sub_draw(2),
                });
            }
        }
        // two bit faults in one chip word
        for (i, a) in active.iter().enumerate() {
            for b in &active[i + 1..] {
                if a.granularity == Granularity::Bit && b.granularity == Granularity::Bit && a.footprint.same_device(&b.footprint) && a.footprint.shares_address(&b.footprint) {
                    out.push(ChipError {
                        fp: a.footprint,
                        granularity: Granularity::Bit,
                        transient: !a.is_permanent() || !b.is_permanent(),
                        multi: true,
                        detected: true,
                        double_bit: true,
                        draw: a.sub_draw(3),
                    });
                }
            }
        }
        out
    }

    /// Distinct chips sharing a codeword with `e` among errors accepted by
    /// `pick`, including `e`'s own chip.
    fn cluster<'a>(errors: &'a [ChipError], e: &ChipError, pick: impl Fn(&ChipError) -> bool) -> Vec<&'a ChipError> {
        let mut chips: Vec<&ChipError> = Vec::new();
        for o in errors.iter().filter(|o| pick(o)) {
            let same_chip = o.fp.chip == e.fp.chip;
            if (same_chip && std::ptr::eq(o, e)) || (!same_chip && e.fp.shares_codeword_slot(&o.fp)) {
                if let Some(prev) = chips.iter_mut().find(|p| p.fp.chip == o.fp.chip) {
                    // keep the worse (undetected) error of a chip
                    if prev.detected && !o.detected {
                        *prev = o;
                    }
                } else {
                    chips.push(o);
                }
            }
        }
        chips
    }

    fn judge(&self, errors: &[ChipError]) -> EpochReport {
        match self.kind {
            XedSchemeKind::EccDimm => {
                let beat = 8.0;
                let w = self.geometry.bits_per_chip_per_access as f64;
                for e in errors.iter().filter(|e| e.multi) {
                    if e.double_bit {
                        if e.draw < (beat - 1.0) / (w - 1.0) {
                            return EpochReport::due("bit+bit");
                        }
                    } else if e.draw < self.rates.dimm_sdc {
                        return EpochReport::sdc(e.granularity.as_str());
                    } else {
                        return EpochReport::due(e.granularity.as_str());
                    }
                }
                EpochReport::ok()
            }
            XedSchemeKind::Xed => {
                for e in errors.iter().filter(|e| e.multi) {
                    if Self::cluster(errors, e, |o| o.multi).len() >= 2 {
                        return EpochReport::due("multi-chip");
                    }
                }
                for e in errors.iter().filter(|e| e.multi && !e.detected) {
                    // a catch-word elsewhere in the codeword is rebuilt from
                    // parity that includes the silent error
                    if Self::cluster(errors, e, |o| !o.multi).len() >= 2 {
                        return EpochReport::sdc("undetected+bit");
                    }
                    let single_line = matches!(e.granularity, Granularity::Word | Granularity::Column);
                    if single_line && e.transient {
                        return EpochReport::due(e.granularity.as_str());
                    }
                }
                EpochReport::ok()
            }
            XedSchemeKind::Chipkill | XedSchemeKind::DoubleChipkill => {
                let limit = if self.kind == XedSchemeKind::Chipkill { 2 } else { 3 };
                for e in errors.iter().filter(|e| e.multi && !e.double_bit) {
                    let n = Self::cluster(errors, e, |o| o.multi && !o.double_bit).len();
                    if n >= limit {
                        if n > limit && e.draw < CHIPKILL_MULTI_SYMBOL_MISS {
                            return EpochReport::sdc("multi-chip");
                        }
                        return EpochReport::due("multi-chip");
                    }
                }
                EpochReport::ok()
            }
            XedSchemeKind::XedOnChipkill => {
                for e in errors.iter().filter(|e| e.multi) {
                    let cost: usize = Self::cluster(errors, e, |o| o.multi).iter().map(|o| if o.detected { 1 } else { 2 }).sum();
                    if cost > 2 {
                        return EpochReport::due("multi-chip");
                    }
                }
                EpochReport::ok()
            }
        }
    }
}

impl Scheme for XedSystem {
    type State = ();

    fn name(&self) -> String {
        self.kind.as_str().to_string()
    }

    fn init_state(&self) {}

    fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    fn classify_epoch(&self, _: &mut (), active: &[FaultRecord], _: u64) -> EpochReport {
        self.judge(&self.errors(active))
    }
}
