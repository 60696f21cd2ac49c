mod emit;

use anyhow::{Context, Result, bail};
use clap::{Args, Parser, Subcommand};
use emit::{RunManifest, Table, emit_csv, emit_json, sci};
use memshield_core::archshield::{archshield_provision, overflow_curve};
use memshield_core::citadel::{CitadelScheme, CitadelSystem, Organization, SwapMode};
use memshield_core::codes::CodecId;
use memshield_core::codes::{ErrorMode, detection_rate_probe};
use memshield_core::faultmodel::{FitTable, fit_preset, sttram_cell_ber};
use memshield_core::simkernel::{TrialConfig, run_campaign, threads_from_env};
use memshield_core::sudoku::{CacheModel, FitScheme, SdrTable, Variant, analytic_fit, sudoku_inject};
use memshield_core::xed::{XedSchemeKind, XedSystem};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const HOURS_PER_YEAR: f64 = 8760.0;

#[derive(Parser)]
#[command(name = "memshield", version, about = "Memory reliability analysis and Monte-Carlo campaigns")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Error-detection codecs.
    Codes {
        #[command(subcommand)]
        cmd: CodesCmd,
    },
    /// Fault map and replication area for scaling faults.
    Archshield {
        #[command(subcommand)]
        cmd: ArchCmd,
    },
    /// On-die error detection with rank-level correction.
    Xed {
        #[command(subcommand)]
        cmd: XedCmd,
    },
    /// Stacked-memory protection.
    Citadel {
        #[command(subcommand)]
        cmd: CitadelCmd,
    },
    /// STT-RAM cache protection.
    Sudoku {
        #[command(subcommand)]
        cmd: SudokuCmd,
    },
    /// Write the analytic result set into a directory.
    Report {
        #[arg(long)]
        out_dir: PathBuf,
        /// Random patterns per probe row.
        #[arg(long, default_value = "1e5", value_parser = parse_count)]
        probe_trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum CodesCmd {
    /// Fraction of k-bit error patterns a codec detects.
    Probe {
        #[arg(long)]
        codec: String,
        #[arg(long)]
        errors: usize,
        #[arg(long, default_value = "random")]
        mode: String,
        #[arg(long, default_value = "1e6", value_parser = parse_count)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ArchCmd {
    /// Fault-map and replication-area sizing.
    Provision {
        #[arg(long)]
        ber: f64,
        /// Bytes, or with a KiB/MiB/GiB/TiB (or KB/MB/GB/TB) suffix.
        #[arg(long, value_parser = parse_capacity)]
        capacity: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Placement-failure probability vs faulty-word count (CSV).
    OverflowCurve {
        /// start:stop:step, or a comma list.
        #[arg(long, required = true)]
        errors: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "8,12,16")]
        overflow_sets: Vec<usize>,
        /// Replication groups at full scale.
        #[arg(long, default_value_t = 131_072)]
        groups: u64,
        /// Divide both error counts and groups by this factor.
        #[arg(long, default_value_t = 64)]
        scale: u64,
        #[arg(long, default_value = "1e4", value_parser = parse_count)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CampaignArgs {
    #[arg(long, default_value = "1e5", value_parser = parse_count)]
    trials: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 7.0)]
    years: f64,
    /// Scrub interval in hours.
    #[arg(long, default_value_t = 12.0)]
    scrub_hours: f64,
    /// TOML FIT table; replaces the named preset.
    #[arg(long)]
    fit_file: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum XedCmd {
    /// Lifetime Monte-Carlo of one DIMM scheme (JSON).
    Simulate {
        #[arg(long)]
        scheme: String,
        #[arg(long, default_value = "sridharan12")]
        fit_preset: String,
        #[arg(long, default_value_t = 0.0)]
        scaling_ber: f64,
        #[command(flatten)]
        run: CampaignArgs,
    },
}

#[derive(Subcommand)]
enum CitadelCmd {
    /// Lifetime Monte-Carlo of one stack configuration (JSON).
    Simulate {
        #[arg(long, default_value = "hbm")]
        org: String,
        #[arg(long, default_value_t = 0.0)]
        tsv_fit: f64,
        #[arg(long, default_value = "3dp-dds")]
        scheme: String,
        #[arg(long, default_value = "set")]
        tsv_swap: String,
        #[command(flatten)]
        run: CampaignArgs,
    },
    /// Failure probability across TSV FIT rates and schemes (CSV).
    TsvSweep {
        #[arg(long, default_value = "hbm")]
        org: String,
        #[arg(long, value_delimiter = ',', default_value = "14,43,143,430,1430")]
        tsv_fits: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "3dp-dds,3dp,stripe")]
        schemes: Vec<String>,
        #[arg(long, default_value = "set")]
        tsv_swap: String,
        #[command(flatten)]
        run: CampaignArgs,
    },
}

#[derive(Subcommand)]
enum SudokuCmd {
    /// Closed-form FIT and MTTF per scheme and scrub interval (CSV).
    Fit {
        #[arg(long, value_delimiter = ',', default_value = "ecc1,ecc2,ecc3,ecc4,ecc5,x,y,z")]
        scheme: Vec<String>,
        #[arg(long, default_value_t = 30.0)]
        delta: f64,
        #[arg(long, value_delimiter = ',', default_value = "20")]
        scrub_ms: Vec<f64>,
        #[arg(long, default_value_t = 1 << 20)]
        lines: u64,
        #[arg(long, default_value_t = 1024)]
        group_size: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bit-level fault injection into a small simulated cache (JSON).
    Inject {
        #[arg(long)]
        variant: String,
        #[arg(long, default_value_t = 4096)]
        lines: u64,
        #[arg(long, default_value_t = 64)]
        group_size: u64,
        /// Flip probability per bit per epoch; defaults to the retention
        /// model at --delta and --scrub-ms.
        #[arg(long)]
        ber: Option<f64>,
        #[arg(long, default_value_t = 30.0)]
        delta: f64,
        #[arg(long, default_value_t = 20.0)]
        scrub_ms: f64,
        #[arg(long, value_parser = parse_count)]
        epochs: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 1.8e19 => Ok(v as u64),
        _ => Err(format!("'{s}' is not a non-negative integer")),
    }
}

fn parse_capacity(s: &str) -> std::result::Result<u64, String> {
    const UNITS: [(&str, u64); 9] = [
        ("kib", 1 << 10),
        ("mib", 1 << 20),
        ("gib", 1 << 30),
        ("tib", 1 << 40),
        ("kb", 1_000),
        ("mb", 1_000_000),
        ("gb", 1_000_000_000),
        ("tb", 1_000_000_000_000),
        ("b", 1),
    ];
    let t = s.trim().to_ascii_lowercase();
    let (num, mult) = UNITS
        .iter()
        .find_map(|(u, m)| t.strip_suffix(u).map(|n| (n.to_string(), *m)))
        .unwrap_or((t.clone(), 1));
    let n: f64 = num.trim().parse().map_err(|_| format!("bad capacity '{s}'"))?;
    if !(n > 0.0) {
        return Err("capacity must be positive".into());
    }
    Ok((n * mult as f64).round() as u64)
}

/// Expand `a:b:step` (inclusive) when given as the only value.
fn expand_errors(raw: &[String]) -> Result<Vec<f64>> {
    if raw.len() == 1 && raw[0].contains(':') {
        let p: Vec<f64> = raw[0].split(':').map(|x| x.trim().parse::<f64>()).collect::<std::result::Result<_, _>>()
            .map_err(|_| memshield_core::Error::Config(format!("bad range '{}'", raw[0])))?;
        let [a, b, step] = p[..] else { bail!(memshield_core::Error::Config("range must be start:stop:step".into())) };
        if !(step > 0.0) || b < a {
            bail!(memshield_core::Error::Config("range needs step > 0 and stop >= start".into()));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| a + i as f64 * step).collect());
    }
    raw.iter()
        .flat_map(|r| r.split(','))
        .map(|x| x.trim().parse::<f64>().map_err(|_| memshield_core::Error::Config(format!("'{x}' is not a number")).into()))
        .collect()
}

fn load_fit(preset: &str, file: Option<&Path>) -> Result<FitTable> {
    Ok(match file {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            FitTable::from_toml(&text).with_context(|| format!("in {}", p.display()))?
        }
        None => fit_preset(preset)?,
    })
}

fn citadel_fit(org: Organization, tsv_fit: f64, file: Option<&Path>) -> Result<FitTable> {
    match file {
        None => Ok(org.fit_table(tsv_fit)?),
        Some(_) => {
            let g = org.geometry();
            Ok(load_fit("stacked8gb", file)?.with_tsv_fit(tsv_fit * org.tsv_fit_multiplier(), g.data_tsvs_per_channel, g.addr_tsvs_per_channel))
        }
    }
}

fn trial_config(fit: FitTable, run: &CampaignArgs) -> Result<TrialConfig> {
    if !(run.years > 0.0) {
        bail!(memshield_core::Error::Config("years must be positive".into()));
    }
    let mut cfg = TrialConfig::new(fit, run.years * HOURS_PER_YEAR, run.seed);
    cfg.scrub_interval_hours = run.scrub_hours;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let threads = threads_from_env();
    match cli.cmd {
        Cmd::Codes { cmd: CodesCmd::Probe { codec, errors, mode, trials, seed, out } } => {
            let codec: CodecId = codec.parse()?;
            let mode: ErrorMode = mode.parse()?;
            let r = detection_rate_probe(codec, errors, mode, trials, seed)?;
            let m = RunManifest::new(json!({"codec": codec, "errors": errors, "mode": mode, "trials": trials}), Some(seed), out.as_deref());
            emit_json(&r, &m, out.as_deref())
        }
        Cmd::Archshield { cmd: ArchCmd::Provision { ber, capacity, out } } => {
            let r = archshield_provision(ber, capacity)?;
            let m = RunManifest::new(json!({"ber": ber, "capacity_bytes": capacity}), None, out.as_deref());
            emit_json(&r, &m, out.as_deref())
        }
        Cmd::Archshield { cmd: ArchCmd::OverflowCurve { errors, overflow_sets, groups, scale, trials, seed, out } } => {
            let errors = expand_errors(&errors)?;
            if scale == 0 || groups % scale != 0 {
                bail!(memshield_core::Error::Config("scale must divide the group count".into()));
            }
            if trials == 0 || overflow_sets.is_empty() {
                bail!(memshield_core::Error::Config("need trials >= 1 and at least one overflow-set count".into()));
            }
            let scaled: Vec<f64> = errors.iter().map(|e| e / scale as f64).collect();
            let pts = overflow_curve(&scaled, &overflow_sets, groups / scale, trials, seed);
            let mut t = Table::new(vec!["errors", "overflow_sets", "p_fail"]);
            for p in &pts {
                t.rows.push(vec![sci(p.errors * scale as f64), p.overflow_sets.to_string(), sci(p.p_fail)]);
            }
            let m = RunManifest::new(
                json!({"errors": errors, "overflow_sets": overflow_sets, "groups": groups, "scale": scale, "trials": trials}),
                Some(seed),
                out.as_deref(),
            );
            emit_csv(&t, &m, out.as_deref())
        }
        Cmd::Xed { cmd: XedCmd::Simulate { scheme, fit_preset, scaling_ber, run } } => {
            let kind: XedSchemeKind = scheme.parse()?;
            if !(0.0..1.0).contains(&scaling_ber) {
                bail!(memshield_core::Error::Config("scaling ber must lie in [0, 1)".into()));
            }
            let fit = load_fit(&fit_preset, run.fit_file.as_deref())?;
            let cfg = trial_config(fit.clone(), &run)?;
            let r = run_campaign(&XedSystem::standard(kind, scaling_ber), &cfg, run.trials, threads)?;
            let m = RunManifest::new(
                json!({"scheme": kind.as_str(), "fit": fit, "scaling_ber": scaling_ber, "years": run.years, "scrub_hours": run.scrub_hours, "trials": run.trials}),
                Some(run.seed),
                run.out.as_deref(),
            );
            emit_json(&r, &m, run.out.as_deref())
        }
        Cmd::Citadel { cmd: CitadelCmd::Simulate { org, tsv_fit, scheme, tsv_swap, run } } => {
            let org: Organization = org.parse()?;
            let scheme: CitadelScheme = scheme.parse()?;
            let swap: SwapMode = tsv_swap.parse()?;
            let fit = citadel_fit(org, tsv_fit, run.fit_file.as_deref())?;
            let cfg = trial_config(fit.clone(), &run)?;
            let r = run_campaign(&CitadelSystem::new(scheme, org, swap), &cfg, run.trials, threads)?;
            let m = RunManifest::new(
                json!({"org": org.as_str(), "scheme": scheme.as_str(), "tsv_swap": swap.as_str(), "tsv_fit": tsv_fit, "fit": fit, "years": run.years, "scrub_hours": run.scrub_hours, "trials": run.trials}),
                Some(run.seed),
                run.out.as_deref(),
            );
            emit_json(&r, &m, run.out.as_deref())
        }
        Cmd::Citadel { cmd: CitadelCmd::TsvSweep { org, tsv_fits, schemes, tsv_swap, run } } => {
            let org: Organization = org.parse()?;
            let swap: SwapMode = tsv_swap.parse()?;
            let schemes: Vec<CitadelScheme> = schemes.iter().map(|s| s.parse()).collect::<memshield_core::Result<_>>()?;
            let mut t = Table::new(vec!["tsv_fit", "scheme", "tsv_swap", "trials", "failures", "p_fail", "ci95_low", "ci95_high"]);
            for &f in &tsv_fits {
                let cfg = trial_config(citadel_fit(org, f, run.fit_file.as_deref())?, &run)?;
                for &s in &schemes {
                    let r = run_campaign(&CitadelSystem::new(s, org, swap), &cfg, run.trials, threads)?;
                    t.rows.push(vec![
                        sci(f),
                        s.as_str().into(),
                        swap.as_str().into(),
                        r.trials.to_string(),
                        r.failures.to_string(),
                        sci(r.p_fail),
                        sci(r.ci95_low),
                        sci(r.ci95_high),
                    ]);
                }
            }
            let m = RunManifest::new(
                json!({"org": org.as_str(), "tsv_fits": tsv_fits, "schemes": schemes.iter().map(|s| s.as_str()).collect::<Vec<_>>(), "tsv_swap": swap.as_str(), "years": run.years, "trials": run.trials}),
                Some(run.seed),
                run.out.as_deref(),
            );
            emit_csv(&t, &m, run.out.as_deref())
        }
        Cmd::Sudoku { cmd: SudokuCmd::Fit { scheme, delta, scrub_ms, lines, group_size, out } } => {
            let t = sudoku_table(&scheme, delta, &scrub_ms, lines, group_size)?;
            let m = RunManifest::new(
                json!({"schemes": scheme, "delta": delta, "scrub_ms": scrub_ms, "lines": lines, "group_size": group_size}),
                None,
                out.as_deref(),
            );
            emit_csv(&t, &m, out.as_deref())
        }
        Cmd::Sudoku { cmd: SudokuCmd::Inject { variant, lines, group_size, ber, delta, scrub_ms, epochs, seed, out } } => {
            let v: Variant = variant.parse()?;
            if epochs == 0 {
                bail!(memshield_core::Error::Config("epochs must be >= 1".into()));
            }
            let ber = ber.unwrap_or_else(|| sttram_cell_ber(delta, scrub_ms / 1000.0));
            let r = sudoku_inject(v, lines, group_size, ber, epochs, seed)?;
            let m = RunManifest::new(json!({"variant": v, "lines": lines, "group_size": group_size, "ber": ber, "epochs": epochs}), Some(seed), out.as_deref());
            emit_json(&r, &m, out.as_deref())
        }
        Cmd::Report { out_dir, probe_trials, seed } => report(&out_dir, probe_trials, seed),
    }
}

fn sudoku_table(schemes: &[String], delta: f64, scrub_ms: &[f64], lines: u64, group_size: u64) -> Result<Table> {
    let schemes: Vec<FitScheme> = schemes.iter().map(|s| s.parse()).collect::<memshield_core::Result<_>>()?;
    if !(delta > 0.0) || scrub_ms.iter().any(|s| !(*s > 0.0)) {
        bail!(memshield_core::Error::Config("delta and scrub intervals must be positive".into()));
    }
    let mut t = Table::new(vec!["scheme", "scrub_ms", "ber", "p_line_fail", "p_group_fail", "due_fit", "sdc_fit", "fit", "mttf_hours"]);
    for &ms in scrub_ms {
        let c = CacheModel { lines, group_size, scrub_s: ms / 1000.0, ber: sttram_cell_ber(delta, ms / 1000.0) };
        for &s in &schemes {
            let r = analytic_fit(s, &c, SdrTable::cached())?;
            t.rows.push(vec![
                r.scheme.clone(),
                sci(ms),
                sci(r.ber),
                sci(r.p_line_fail),
                r.p_group_fail.map(sci).unwrap_or_default(),
                sci(r.due_fit),
                sci(r.sdc_fit),
                sci(r.fit),
                sci(r.mttf_hours),
            ]);
        }
    }
    Ok(t)
}

/// Analytic and probe results that need no lifetime campaign.
fn report(dir: &Path, probe_trials: u64, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut probes = Table::new(vec!["codec", "mode", "errors", "patterns", "detected_fraction", "miscorrected"]);
    for codec in [CodecId::Hamming7264, CodecId::Crc8Atm] {
        for mode in [ErrorMode::Burst, ErrorMode::Random] {
            for k in 1..=8 {
                let r = detection_rate_probe(codec, k, mode, probe_trials, seed)?;
                probes.rows.push(vec![codec.to_string(), mode.to_string(), k.to_string(), r.patterns.to_string(), sci(r.detected_fraction), r.miscorrected.to_string()]);
            }
        }
    }
    let cfg = json!({"probe_trials": probe_trials});
    let p = dir.join("codes_probe.csv");
    emit_csv(&probes, &RunManifest::new(cfg.clone(), Some(seed), Some(&p)), Some(&p))?;

    let schemes: Vec<String> = ["ecc1", "ecc2", "ecc3", "ecc4", "ecc5", "x", "y", "z"].map(String::from).to_vec();
    let t = sudoku_table(&schemes, 30.0, &[5.0, 10.0, 20.0, 40.0, 80.0], 1 << 20, 1024)?;
    let p = dir.join("sudoku_fit.csv");
    emit_csv(&t, &RunManifest::new(json!({"delta": 30.0}), None, Some(&p)), Some(&p))?;

    let prov: Vec<_> = [1e-4, 1e-5, 1e-6].iter().map(|&b| archshield_provision(b, 8 << 30)).collect::<memshield_core::Result<_>>()?;
    let p = dir.join("archshield_provision.json");
    emit_json(&prov, &RunManifest::new(json!({"capacity_bytes": 8u64 << 30}), None, Some(&p)), Some(&p))?;
    eprintln!("report written to {}", dir.display());
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<memshield_core::Error>() {
        Some(memshield_core::Error::Invariant(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
