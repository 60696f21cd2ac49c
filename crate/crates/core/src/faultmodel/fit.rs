use super::{Granularity, Permanence};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Failure rates in FIT (failures per 10^9 device-hours), per device for
/// cell-array modes and per channel for TSV modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitTable {
    pub name: String,
    pub unit: String,
    #[serde(default)]
    pub transient: BTreeMap<Granularity, f64>,
    #[serde(default)]
    pub permanent: BTreeMap<Granularity, f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFit {
    name: String,
    unit: String,
    #[serde(default)]
    transient: BTreeMap<toml::Spanned<String>, toml::Spanned<f64>>,
    #[serde(default)]
    permanent: BTreeMap<toml::Spanned<String>, toml::Spanned<f64>>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl FitTable {
    pub fn empty(name: &str) -> Self {
        Self { name: name.into(), unit: "device".into(), transient: BTreeMap::new(), permanent: BTreeMap::new() }
    }

    pub fn rate(&self, g: Granularity, p: Permanence) -> f64 {
        let m = match p {
            Permanence::Transient => &self.transient,
            Permanence::Permanent => &self.permanent,
        };
        m.get(&g).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, g: Granularity, p: Permanence, fit: f64) {
        let m = match p {
            Permanence::Transient => &mut self.transient,
            Permanence::Permanent => &mut self.permanent,
        };
        if fit == 0.0 {
            m.remove(&g);
        } else {
            m.insert(g, fit);
        }
    }

    /// Every nonzero (granularity, permanence, rate).
    pub fn entries(&self) -> impl Iterator<Item = (Granularity, Permanence, f64)> + '_ {
        let t = self.transient.iter().map(|(g, r)| (*g, Permanence::Transient, *r));
        let p = self.permanent.iter().map(|(g, r)| (*g, Permanence::Permanent, *r));
        t.chain(p).filter(|e| e.2 > 0.0)
    }

    pub fn total_excluding_tsv(&self) -> f64 {
        self.entries().filter(|e| !e.0.is_tsv()).map(|e| e.2).sum()
    }

    /// Parse a TOML table. Diagnostics carry 1-based line numbers.
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawFit = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        let mut out = FitTable::empty(&raw.name);
        out.unit = raw.unit;
        for (perm, map) in [(Permanence::Transient, raw.transient), (Permanence::Permanent, raw.permanent)] {
            for (k, v) in map {
                let g: Granularity = k.get_ref().parse().map_err(|_| {
                    Error::Config(format!("line {}: unknown granularity '{}'", line_of(text, k.span().start), k.get_ref()))
                })?;
                let r = *v.get_ref();
                if !r.is_finite() || r < 0.0 {
                    return Err(Error::Config(format!(
                        "line {}: rate for '{}' must be a finite non-negative FIT, got {r}",
                        line_of(text, v.span().start),
                        k.get_ref()
                    )));
                }
                out.set(g, perm, r);
            }
        }
        Ok(out)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("FIT tables always serialize")
    }

    /// Replace both TSV modes by a single per-channel rate split between
    /// data and address TSVs in proportion to their counts.
    pub fn with_tsv_fit(mut self, fit: f64, data_tsvs: u32, addr_tsvs: u32) -> Self {
        let total = (data_tsvs + addr_tsvs).max(1) as f64;
        for p in [Permanence::Transient, Permanence::Permanent] {
            self.set(Granularity::DataTsv, p, 0.0);
            self.set(Granularity::AddrTsv, p, 0.0);
        }
        self.set(Granularity::DataTsv, Permanence::Permanent, fit * data_tsvs as f64 / total);
        self.set(Granularity::AddrTsv, Permanence::Permanent, fit * addr_tsvs as f64 / total);
        self
    }
}

/// STT-RAM retention parameters: attempt frequency, scrub period and the
/// thermal-stability factors of interest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SttramPreset {
    pub name: String,
    pub f0_hz: f64,
    pub scrub_interval_s: f64,
    pub deltas: Vec<f64>,
}

impl SttramPreset {
    pub fn from_toml(text: &str) -> Result<Self> {
        let p: SttramPreset = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        if p.f0_hz <= 0.0 || p.scrub_interval_s <= 0.0 || p.deltas.iter().any(|d| *d <= 0.0) {
            return Err(Error::Config("STT-RAM parameters must be positive".into()));
        }
        Ok(p)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("presets always serialize")
    }
}

const SRIDHARAN12: &str = include_str!("../../presets/sridharan12.toml");
const STACKED8GB: &str = include_str!("../../presets/stacked8gb.toml");
const STTRAM: &str = include_str!("../../presets/sttram.toml");

pub const FIT_PRESETS: [&str; 2] = ["sridharan12", "stacked8gb"];

pub fn preset_text(name: &str) -> Result<&'static str> {
    match name {
        "sridharan12" => Ok(SRIDHARAN12),
        "stacked8gb" => Ok(STACKED8GB),
        "sttram" => Ok(STTRAM),
        _ => Err(Error::Config(format!("unknown preset '{name}'"))),
    }
}

pub fn fit_preset(name: &str) -> Result<FitTable> {
    if name == "sttram" {
        return Err(Error::Config("'sttram' is not a FIT table".into()));
    }
    FitTable::from_toml(preset_text(name)?)
}

pub fn sttram_preset() -> SttramPreset {
    SttramPreset::from_toml(STTRAM).expect("bundled preset parses")
}
