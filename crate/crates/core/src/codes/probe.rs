//! Detection-rate measurement for multi-bit error patterns.
//!
//! A pattern counts as detected when the decoder reports anything other than
//! CLEAN, i.e. it recognises an invalid codeword. Patterns that decode as
//! CORRECTED with the wrong payload are detected but tallied separately as
//! miscorrections.

use super::{BitBlock, Codec, CodecId, CodecStatus};
use crate::error::{Error, Result};
use rand::seq::index::sample;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ErrorMode {
    Random,
    Burst,
}

impl FromStr for ErrorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Self::Random),
            "burst" => Ok(Self::Burst),
            _ => Err(Error::Invalid(format!("unknown error mode '{s}'"))),
        }
    }
}

impl fmt::Display for ErrorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Random => "random",
            Self::Burst => "burst",
        })
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ProbeResult {
    pub codec: CodecId,
    pub nerrors: usize,
    pub mode: ErrorMode,
    pub patterns: u64,
    pub detected: u64,
    pub miscorrected: u64,
    pub detected_fraction: f64,
}

/// Number of contiguous windows of `k` bits in a `width`-bit codeword.
pub fn burst_windows(width: usize, k: usize) -> usize {
    width + 1 - k
}

pub fn detection_rate_probe(codec: CodecId, nerrors: usize, mode: ErrorMode, trials: u64, seed: u64) -> Result<ProbeResult> {
    probe_codec(codec.build().as_ref(), nerrors, mode, trials, seed)
}

/// `trials` is ignored in burst mode, which enumerates every window.
pub fn probe_codec(codec: &dyn Codec, nerrors: usize, mode: ErrorMode, trials: u64, seed: u64) -> Result<ProbeResult> {
    let n = codec.code_width();
    if nerrors == 0 || nerrors > 8 || nerrors > n {
        return Err(Error::Invalid(format!("nerrors must be in 1..=8, got {nerrors}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = (0u64, 0u64, 0u64);
    let mut run_one = |positions: &mut dyn Iterator<Item = usize>, rng: &mut ChaCha8Rng| -> Result<()> {
        let data = BitBlock::random(codec.data_width(), rng);
        let mut cw = codec.encode(&data)?;
        for p in positions {
            cw.flip(p);
        }
        let (out, verdict) = codec.decode(&cw)?;
        tally.0 += 1;
        if verdict.status != CodecStatus::Clean {
            tally.1 += 1;
            if verdict.judge(&out, &data).status == CodecStatus::MiscorrectedUnknown {
                tally.2 += 1;
            }
        }
        Ok(())
    };
    match mode {
        ErrorMode::Burst => {
            for start in 0..burst_windows(n, nerrors) {
                run_one(&mut (start..start + nerrors), &mut rng)?;
            }
        }
        ErrorMode::Random => {
            if trials == 0 {
                return Err(Error::Invalid("random probe needs trials >= 1".into()));
            }
            for _ in 0..trials {
                let mut pick = ChaCha8Rng::seed_from_u64(rng.random());
                let idx = sample(&mut pick, n, nerrors);
                run_one(&mut idx.into_iter(), &mut rng)?;
            }
        }
    }
    let (patterns, detected, miscorrected) = tally;
    Ok(ProbeResult {
        codec: codec.id(),
        nerrors,
        mode,
        patterns,
        detected,
        miscorrected,
        detected_fraction: detected as f64 / patterns as f64,
    })
}
