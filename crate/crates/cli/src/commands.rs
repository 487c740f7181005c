use std::fs;
use std::io::{BufReader, BufWriter};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use seebench::analysis::{
    adc_current_series, analyze_run, extrapolate_row, fluence_series, orbital_fluxes, render_tables,
    AnalysisOptions, Provenance, ReportBundle,
};
use seebench::classify::{chip_status, ResetLog, RunParams};
use seebench::io::{
    config_digest, load_campaign_config, load_preset, load_reference_tables, parse_events, parse_telemetry,
    write_campaign_config, write_events, write_telemetry, EventLogHeader, TelemetryHeader, PRESETS,
};
use seebench::simulator::{run_campaign_with, Recording};
use seebench::verify::{verify as verify_tables, Tolerances};
use seebench::{CampaignConfig, EventTag};

/// Environment variable scaling the relative tolerances of `verify`.
pub const TOLERANCE_SCALE_VAR: &str = "SEEBENCH_TOLERANCE_SCALE";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Code {
    Usage = 1,
    Data = 2,
    Verification = 3,
}

#[derive(Debug)]
pub struct Failure {
    pub code: Code,
    pub error: anyhow::Error,
}

trait OrFail<T> {
    fn or_fail(self, code: Code) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrFail<T> for std::result::Result<T, E> {
    fn or_fail(self, code: Code) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

const TELEMETRY_FILE: &str = "telemetry.csv";
const EVENTS_FILE: &str = "events.csv";
const MANIFEST_FILE: &str = "manifest.json";

/// Written next to every simulated run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub campaign: String,
    pub seed: u64,
    pub config_digest: String,
    pub fw_block_cross_section: f64,
    pub sel_cross_section: f64,
    pub beam_flux: f64,
    pub irradiation_time: f64,
    pub total_duration: f64,
    pub tick: f64,
    pub events: String,
    pub telemetry: Option<String>,
    pub fw_block: usize,
    pub sel: usize,
    pub resets: usize,
    pub eeprom_pre: String,
    pub eeprom_post: String,
    /// Canonical config the run used.
    pub config: String,
}

pub struct SimulateOptions {
    pub config: Option<PathBuf>,
    pub preset: Option<String>,
    pub seed: Option<String>,
    pub out: PathBuf,
    pub events_only: bool,
    pub start: String,
}

fn parse_seeds(spec: &str) -> Result<RangeInclusive<u64>> {
    let num = |s: &str| s.trim().parse::<u64>().with_context(|| format!("bad seed `{s}`"));
    if let Some((a, b)) = spec.split_once("..=") {
        let (a, b) = (num(a)?, num(b)?);
        if b < a {
            bail!("empty seed range `{spec}`");
        }
        Ok(a..=b)
    } else if let Some((a, b)) = spec.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        if b <= a {
            bail!("empty seed range `{spec}`");
        }
        Ok(a..=b - 1)
    } else {
        let s = num(spec)?;
        Ok(s..=s)
    }
}

fn load_config(config: Option<&Path>, preset: Option<&str>) -> Result<CampaignConfig> {
    match (config, preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            load_campaign_config(&text).with_context(|| format!("in {}", path.display()))
        }
        (None, Some(name)) => Ok(load_preset(name)?),
        (None, None) => bail!("one of --config or --preset is required"),
    }
}

fn write_atomic(path: &Path, write: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("partial");
    let result = (|| -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        write(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.with_context(|| format!("writing {}", path.display()))
}

fn simulate_one(base: &CampaignConfig, seed: u64, dir: &Path, events_only: bool, start: &str) -> Result<Manifest> {
    let mut cfg = base.clone();
    cfg.seed = seed;
    let digest = config_digest(&cfg);
    let recording = if events_only { Recording::EventsOnly } else { Recording::Full };
    let run = run_campaign_with(&cfg, recording)?;

    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let header = EventLogHeader::for_run(&cfg, &digest, &run);
    write_atomic(&dir.join(EVENTS_FILE), |w| Ok(write_events(&run.events, &header, w).map(|_| ())?))?;
    if !events_only {
        let th = TelemetryHeader::new(&cfg.campaign, &digest, cfg.tick, start);
        write_atomic(&dir.join(TELEMETRY_FILE), |w| {
            Ok(write_telemetry(&run.telemetry, &th, w).map(|_| ())?)
        })?;
    }
    let manifest = Manifest {
        campaign: cfg.campaign.clone(),
        seed,
        config_digest: digest,
        fw_block_cross_section: cfg.fw_block_cross_section(),
        sel_cross_section: cfg.sel_cross_section(),
        beam_flux: cfg.beam_flux(),
        irradiation_time: run.timeline.gpio_time(),
        total_duration: cfg.total_duration,
        tick: cfg.tick,
        events: EVENTS_FILE.into(),
        telemetry: (!events_only).then(|| TELEMETRY_FILE.into()),
        fw_block: run.events.count(EventTag::FwBlock),
        sel: run.events.count(EventTag::Sel),
        resets: run.events.reset_times().len(),
        eeprom_pre: run.eeprom_pre.clone(),
        eeprom_post: run.eeprom_post.clone(),
        config: write_campaign_config(&cfg),
    };
    write_atomic(&dir.join(MANIFEST_FILE), |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest)?;
        Ok(())
    })?;
    Ok(manifest)
}

pub fn simulate(opts: SimulateOptions) -> Result<(), Failure> {
    let base = load_config(opts.config.as_deref(), opts.preset.as_deref()).or_fail(Code::Usage)?;
    let seeds = match &opts.seed {
        Some(s) => parse_seeds(s).or_fail(Code::Usage)?,
        None => base.seed..=base.seed,
    };
    let single = seeds.start() == seeds.end();
    let seeds: Vec<u64> = seeds.collect();
    let manifests: Vec<Manifest> = seeds
        .par_iter()
        .map(|&seed| {
            let dir = if single {
                opts.out.clone()
            } else {
                opts.out.join(format!("seed-{seed}"))
            };
            simulate_one(&base, seed, &dir, opts.events_only, &opts.start)
                .with_context(|| format!("seed {seed}"))
        })
        .collect::<Result<_>>()
        .or_fail(Code::Data)?;
    for m in &manifests {
        println!(
            "{} seed {}: {} s ({} s in beam), {} FW blocks, {} SEL, {} resets, config {}",
            m.campaign,
            m.seed,
            m.total_duration,
            m.irradiation_time,
            m.fw_block,
            m.sel,
            m.resets,
            &m.config_digest[..12]
        );
    }
    Ok(())
}

fn read_events(path: &Path) -> Result<(EventLogHeader, seebench::EventLog)> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    parse_events(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

fn analyze_dir(dir: &Path, opts: &AnalysisOptions, years: f64) -> Result<ReportBundle> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = serde_json::from_reader(BufReader::new(
        fs::File::open(&manifest_path).with_context(|| format!("opening {}", manifest_path.display()))?,
    ))
    .with_context(|| format!("parsing {}", manifest_path.display()))?;
    let config = load_campaign_config(&manifest.config).context("config recorded in manifest")?;
    let events_path = dir.join(&manifest.events);
    let (header, events) = read_events(&events_path)?;
    let telemetry = match &manifest.telemetry {
        Some(name) => {
            let p = dir.join(name);
            let f = fs::File::open(&p).with_context(|| format!("opening {}", p.display()))?;
            Some((p.clone(), parse_telemetry(BufReader::new(f)).with_context(|| format!("parsing {}", p.display()))?.1))
        }
        None => None,
    };
    let provenance = Provenance {
        events: events_path.display().to_string(),
        telemetry: telemetry.as_ref().map(|(p, _)| p.display().to_string()),
        config_digest: header.config_digest.clone(),
        seed: header.seed,
    };
    let row = analyze_run(
        &events,
        &header,
        &config.beam,
        telemetry.as_ref().map(|(_, r)| r.as_slice()),
        provenance,
        opts,
    )?;

    let mut bundle = ReportBundle::default();
    if config.beam.species.is_ion() {
        let tables = load_reference_tables()?;
        if !orbital_fluxes(&tables, config.beam.let_).is_empty() {
            bundle.extrapolations = extrapolate_row(&row, config.beam.let_, &tables, years)?;
        }
    }
    bundle.series.push(fluence_series(&header, &config.beam, 10.0, &row.provenance.events));
    if let Some((p, records)) = &telemetry {
        bundle
            .series
            .push(adc_current_series(&header.campaign, records, &p.display().to_string()));
    }
    bundle.rows.push(row);
    Ok(bundle)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "undefined".into())
}

pub fn analyze(runs: &[PathBuf], out: &Path, params: RunParams, years: f64) -> Result<(), Failure> {
    let opts = AnalysisOptions {
        run_params: params,
        ..AnalysisOptions::default()
    };
    let mut bundle = ReportBundle::default();
    for dir in runs {
        bundle.merge(analyze_dir(dir, &opts, years).or_fail(Code::Data)?);
    }
    for r in &bundle.rows {
        println!(
            "{} seed {}: fluence {:.3e} cm-2, dose {}, SEL {}, FW {}, sigma {}, period {}, passed {}, {}",
            r.sample,
            r.provenance.seed,
            r.fluence,
            r.dose_gy.map(|d| format!("{d:.2} Gy")).unwrap_or_else(|| "--".into()),
            r.sel,
            r.fw_block,
            fmt_opt(r.sigma),
            r.period.map(|p| format!("{p:.3} s")).unwrap_or_else(|| "--".into()),
            r.passed.map(|p| if p { "yes" } else { "no" }).unwrap_or("--"),
            r.verdict,
        );
    }
    write_atomic(out, |w| {
        serde_json::to_writer(&mut *w, &bundle)?;
        Ok(())
    })
    .or_fail(Code::Data)
}

fn reset_log(path: &Path) -> Result<(String, ResetLog)> {
    let (header, events) = read_events(path)?;
    let log = ResetLog::from_events(&events, &header.timeline(), header.gpio_cycle, header.gpio_gap);
    Ok((header.campaign, log))
}

pub fn classify(irradiation: &Path, radiationless: Option<&Path>, params: RunParams, json: bool) -> Result<(), Failure> {
    let (sample, irr) = reset_log(irradiation).or_fail(Code::Data)?;
    let later = radiationless.map(reset_log).transpose().or_fail(Code::Data)?;
    let verdict = chip_status(&irr, later.as_ref().map(|(_, l)| l), &params).or_fail(Code::Usage)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&verdict).or_fail(Code::Data)?);
        return Ok(());
    }
    println!("sample,status,irradiation_resets,radiationless_resets,qualifying_runs,break_time_s");
    println!(
        "{sample},{},{},{},{},{}",
        verdict.status,
        verdict.evidence.irradiation_resets,
        verdict
            .evidence
            .radiationless_resets
            .map(|n| n.to_string())
            .unwrap_or_else(|| "--".into()),
        verdict.evidence.runs.len(),
        verdict.break_time.map(|t| format!("{t:.1}")).unwrap_or_else(|| "--".into()),
    );
    Ok(())
}

fn tolerance_scale() -> Result<f64> {
    match std::env::var(TOLERANCE_SCALE_VAR) {
        Err(_) => Ok(1.0),
        Ok(s) => {
            let k: f64 = s
                .parse()
                .map_err(|_| anyhow!("{TOLERANCE_SCALE_VAR}=`{s}` is not a number"))?;
            if !(k.is_finite() && k > 0.0) {
                bail!("{TOLERANCE_SCALE_VAR} must be positive");
            }
            Ok(k)
        }
    }
}

pub fn verify() -> Result<(), Failure> {
    let scale = tolerance_scale().or_fail(Code::Usage)?;
    let tables = load_reference_tables().or_fail(Code::Data)?;
    let report = verify_tables(&tables, &Tolerances::default().scaled(scale));
    println!("{report}");
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure {
            code: Code::Verification,
            error: anyhow!("{} checks failed", report.failures().count() + report.missing.len()),
        })
    }
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

pub fn report(bundles: &[PathBuf], out: &Path) -> Result<(), Failure> {
    let mut bundle = ReportBundle::default();
    for path in bundles {
        let f = fs::File::open(path)
            .with_context(|| format!("opening {}", path.display()))
            .or_fail(Code::Data)?;
        let b: ReportBundle = serde_json::from_reader(BufReader::new(f))
            .with_context(|| format!("parsing {}", path.display()))
            .or_fail(Code::Data)?;
        bundle.merge(b);
    }
    if bundle.is_empty() {
        eprintln!("warning: no analysis rows; writing empty tables");
    }
    let series_dir = out.join("series");
    fs::create_dir_all(&series_dir)
        .with_context(|| format!("creating {}", series_dir.display()))
        .or_fail(Code::Data)?;
    for (stem, text) in render_tables(&bundle) {
        let path = out.join(format!("{stem}.csv"));
        write_atomic(&path, |w| Ok(std::io::Write::write_all(w, text.as_bytes())?)).or_fail(Code::Data)?;
    }
    for (i, s) in bundle.series.iter().enumerate() {
        let path = series_dir.join(format!("{i:03}_{}.dat", file_stem(&s.name)));
        write_atomic(&path, |w| Ok(std::io::Write::write_all(w, s.render().as_bytes())?)).or_fail(Code::Data)?;
    }
    println!(
        "{} rows, {} extrapolations, {} series written to {}",
        bundle.rows.len(),
        bundle.extrapolations.len(),
        bundle.series.len(),
        out.display()
    );
    Ok(())
}

pub fn presets() {
    for (name, _) in PRESETS {
        match load_preset(name) {
            Ok(c) => println!(
                "{name:<5} {:<20} flux {:.3e} cm-2 s-1, {} s",
                format!("{:?}", c.beam.species),
                c.beam.nominal_flux,
                c.total_duration
            ),
            Err(e) => println!("{name:<5} invalid: {e}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_specs() {
        assert_eq!(parse_seeds("4").unwrap(), 4..=4);
        assert_eq!(parse_seeds("1..=3").unwrap(), 1..=3);
        assert_eq!(parse_seeds("1..3").unwrap(), 1..=2);
        assert!(parse_seeds("3..1").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn stems_are_filesystem_safe() {
        assert_eq!(file_stem("S9 ADC supply current"), "s9_adc_supply_current");
    }
}
