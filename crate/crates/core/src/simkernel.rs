//! Monte-Carlo lifetime engine: arrivals, scrub epochs, scheme dispatch and
//! campaign aggregation.

use crate::error::{Error, Result};
use crate::faultmodel::{FaultRecord, FitTable, Geometry, sample_arrivals_rng};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

/// Trials per unit of parallel work.
pub const CHUNK: u64 = 4096;
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Survived,
    Due,
    Sdc,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub verdict: Verdict,
    pub first_event_hours: Option<f64>,
    pub event_cause: Option<String>,
}

impl TrialOutcome {
    pub fn survived() -> Self {
        Self { verdict: Verdict::Survived, first_event_hours: None, event_cause: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EpochVerdict {
    Ok,
    Due(String),
    Sdc(String),
}

/// Result of judging one scrub epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochReport {
    pub verdict: EpochVerdict,
    /// Permanent faults taken out of service (e.g. spared) from now on.
    pub retire: Vec<u32>,
}

impl EpochReport {
    pub fn ok() -> Self {
        Self { verdict: EpochVerdict::Ok, retire: Vec::new() }
    }
    pub fn due(cause: impl Into<String>) -> Self {
        Self { verdict: EpochVerdict::Due(cause.into()), retire: Vec::new() }
    }
    pub fn sdc(cause: impl Into<String>) -> Self {
        Self { verdict: EpochVerdict::Sdc(cause.into()), retire: Vec::new() }
    }
}

/// A protection scheme judged once per scrub epoch on every fault currently
/// resident. Decisions must depend only on the faults (including their own
/// draws) and the state, never on outside randomness.
pub trait Scheme: Sync {
    type State: Send;
    fn name(&self) -> String;
    fn init_state(&self) -> Self::State;
    /// Geometry whose devices the scheme's fault stream is drawn over.
    fn geometry(&self) -> &Geometry;
    /// Optional hook run on freshly sampled faults before the epoch loop.
    fn prepare(&self, _faults: &mut [FaultRecord]) {}
    fn classify_epoch(&self, state: &mut Self::State, active: &[FaultRecord], epoch: u64) -> EpochReport;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialConfig {
    pub fit: FitTable,
    pub lifetime_hours: f64,
    pub scrub_interval_hours: f64,
    pub seed: u64,
}

impl TrialConfig {
    pub fn new(fit: FitTable, lifetime_hours: f64, seed: u64) -> Self {
        Self { fit, lifetime_hours, scrub_interval_hours: 12.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lifetime_hours > 0.0 && self.scrub_interval_hours > 0.0) || self.scrub_interval_hours > self.lifetime_hours {
            return Err(Error::Config("need 0 < scrub interval <= lifetime".into()));
        }
        Ok(())
    }
}

/// Independent stream for one trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

pub fn run_trial<S: Scheme>(scheme: &S, cfg: &TrialConfig, trial: u64) -> TrialOutcome {
    let mut rng = trial_rng(cfg.seed, trial);
    let mut faults = sample_arrivals_rng(&cfg.fit, scheme.geometry(), cfg.lifetime_hours, &mut rng);
    scheme.prepare(&mut faults);
    run_faults(scheme, cfg.scrub_interval_hours, &faults)
}

/// Epoch loop over a given, time-sorted fault list. Epochs without new
/// arrivals are skipped: the resident set is unchanged, so is the verdict.
pub fn run_faults<S: Scheme>(scheme: &S, scrub_interval_hours: f64, faults: &[FaultRecord]) -> TrialOutcome {
    let mut state = scheme.init_state();
    let mut resident: Vec<FaultRecord> = Vec::new();
    let mut i = 0;
    while i < faults.len() {
        let epoch = (faults[i].time_hours / scrub_interval_hours).floor() as u64;
        let mut last = faults[i].time_hours;
        while i < faults.len() && (faults[i].time_hours / scrub_interval_hours).floor() as u64 == epoch {
            last = faults[i].time_hours;
            resident.push(faults[i].clone());
            i += 1;
        }
        let report = scheme.classify_epoch(&mut state, &resident, epoch);
        let (verdict, cause) = match report.verdict {
            EpochVerdict::Ok => {
                resident.retain(|f| f.is_permanent() && !report.retire.contains(&f.index));
                continue;
            }
            EpochVerdict::Due(c) => (Verdict::Due, c),
            EpochVerdict::Sdc(c) => (Verdict::Sdc, c),
        };
        return TrialOutcome { verdict, first_event_hours: Some(last), event_cause: Some(cause) };
    }
    TrialOutcome::survived()
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Tally {
    trials: u64,
    due: u64,
    sdc: u64,
    exposure_hours: f64,
    causes: BTreeMap<String, u64>,
}

impl Tally {
    fn add(&mut self, o: &TrialOutcome, lifetime: f64) {
        self.trials += 1;
        match o.verdict {
            Verdict::Survived => self.exposure_hours += lifetime,
            Verdict::Due | Verdict::Sdc => {
                if o.verdict == Verdict::Due {
                    self.due += 1;
                } else {
                    self.sdc += 1;
                }
                self.exposure_hours += o.first_event_hours.unwrap_or(lifetime);
                *self.causes.entry(o.event_cause.clone().unwrap_or_default()).or_default() += 1;
            }
        }
    }

    fn merge(&mut self, o: Tally) {
        self.trials += o.trials;
        self.due += o.due;
        self.sdc += o.sdc;
        self.exposure_hours += o.exposure_hours;
        for (k, v) in o.causes {
            *self.causes.entry(k).or_default() += v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignResult {
    pub scheme: String,
    pub trials: u64,
    pub failures: u64,
    pub p_fail: f64,
    /// Wilson 95% half-width.
    pub ci95: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub due_rate: f64,
    pub sdc_rate: f64,
    /// Exposure hours per failure; absent when nothing failed.
    pub mttf_hours: Option<f64>,
    pub seed: u64,
    pub causes: BTreeMap<String, u64>,
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k as f64 == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

impl CampaignResult {
    fn from_tally(scheme: String, seed: u64, t: Tally) -> Self {
        let failures = t.due + t.sdc;
        let n = t.trials.max(1) as f64;
        let (lo, hi) = wilson(failures, t.trials);
        Self {
            scheme,
            trials: t.trials,
            failures,
            p_fail: failures as f64 / n,
            ci95: (hi - lo) / 2.0,
            ci95_low: lo,
            ci95_high: hi,
            due_rate: t.due as f64 / n,
            sdc_rate: t.sdc as f64 / n,
            mttf_hours: (failures > 0).then(|| t.exposure_hours / failures as f64),
            seed,
            causes: t.causes,
        }
    }

    /// True when the two 95% intervals do not overlap.
    pub fn separated_from(&self, o: &CampaignResult) -> bool {
        self.ci95_high < o.ci95_low || o.ci95_high < self.ci95_low
    }
}

/// Run `trials` lifetimes on `threads` workers (0 = rayon default). The
/// result does not depend on the thread count.
pub fn run_campaign<S: Scheme>(scheme: &S, cfg: &TrialConfig, trials: u64, threads: usize) -> Result<CampaignResult> {
    cfg.validate()?;
    scheme.geometry().validate()?;
    if trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    let chunks = trials.div_ceil(CHUNK);
    let work = || -> Vec<Tally> {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut t = Tally::default();
                for trial in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                    t.add(&run_trial(scheme, cfg, trial), cfg.lifetime_hours);
                }
                t
            })
            .collect()
    };
    let parts = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?
        .install(work);
    let mut total = Tally::default();
    for p in parts {
        total.merge(p);
    }
    Ok(CampaignResult::from_tally(scheme.name(), cfg.seed, total))
}

/// Thread cap from `MEMSHIELD_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> usize {
    std::env::var("MEMSHIELD_THREADS").ok().and_then(|v| v.trim().parse().ok()).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faultmodel::{Granularity, Permanence, SEVEN_YEARS_HOURS, fit_preset};
    use rand::RngExt;

    /// Fails on any non-bit fault; transient bit faults are scrubbed.
    struct Toy(Geometry);

    impl Scheme for Toy {
        type State = ();
        fn name(&self) -> String {
            "toy".into()
        }
        fn init_state(&self) {}
        fn geometry(&self) -> &Geometry {
            &self.0
        }
        fn classify_epoch(&self, _: &mut (), active: &[FaultRecord], _: u64) -> EpochReport {
            match active.iter().find(|f| f.granularity != Granularity::Bit) {
                Some(f) if f.draw < 0.1 => EpochReport::sdc(f.granularity.as_str()),
                Some(f) => EpochReport::due(f.granularity.as_str()),
                None => EpochReport::ok(),
            }
        }
    }

    fn cfg(seed: u64) -> TrialConfig {
        TrialConfig::new(fit_preset("sridharan12").unwrap(), SEVEN_YEARS_HOURS, seed)
    }

    #[test]
    fn zero_fit_survives() {
        let toy = Toy(Geometry::dimm_x8());
        let c = TrialConfig::new(FitTable::empty("zero"), SEVEN_YEARS_HOURS, 1);
        let r = run_campaign(&toy, &c, 100, 1).unwrap();
        assert_eq!(r.failures, 0);
        assert_eq!(r.mttf_hours, None);
    }

    #[test]
    fn scripted_fault_time_is_reported() {
        let toy = Toy(Geometry::dimm_x8());
        let mut rng = trial_rng(3, 0);
        let (footprint, _) = crate::faultmodel::instantiate(Granularity::Bank, &toy.0, 0, &mut rng);
        let f = FaultRecord {
            index: 0,
            granularity: Granularity::Bank,
            permanence: Permanence::Permanent,
            time_hours: 100.0,
            footprint,
            draw: 0.5,
            tsv_index: None,
        };
        let o = run_faults(&toy, 12.0, &[f]);
        assert_eq!(o.verdict, Verdict::Due);
        assert_eq!(o.first_event_hours, Some(100.0));
        assert_eq!(o.event_cause.as_deref(), Some("bank"));
    }

    #[test]
    fn single_trial_is_zero_or_one() {
        let toy = Toy(Geometry::dimm_x8());
        let r = run_campaign(&toy, &cfg(5), 1, 1).unwrap();
        assert!(r.p_fail == 0.0 || r.p_fail == 1.0);
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let toy = Toy(Geometry::dimm_x8());
        let a = run_campaign(&toy, &cfg(11), 20_000, 1).unwrap();
        let b = run_campaign(&toy, &cfg(11), 20_000, 8).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.sdc_rate > 0.0 && a.due_rate > a.sdc_rate);
    }

    #[test]
    fn rejects_bad_config() {
        let toy = Toy(Geometry::dimm_x8());
        let mut c = cfg(1);
        c.scrub_interval_hours = 2.0 * c.lifetime_hours;
        assert!(run_campaign(&toy, &c, 10, 1).is_err());
        assert!(run_campaign(&toy, &cfg(1), 0, 1).is_err());
    }

    #[test]
    fn wilson_covers_nominally() {
        let mut rng = trial_rng(77, 0);
        let (p, n) = (0.03, 2000u64);
        let mut covered = 0;
        for _ in 0..1000 {
            let k = (0..n).filter(|_| rng.random_bool(p)).count() as u64;
            let (lo, hi) = wilson(k, n);
            covered += (lo <= p && p <= hi) as u32;
        }
        assert!((930..=970).contains(&covered), "{covered}");
    }

    #[test]
    fn wilson_edges() {
        let (lo, hi) = wilson(0, 100);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson(100, 100);
        assert!(lo > 0.95 && hi == 1.0);
    }
}
