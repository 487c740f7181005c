//! Per-run analysis: event counts, fluence, dose, cross-section, rate, the
//! pass/fail judgment and a health verdict, plus the tables and data series
//! a report is made of.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{chip_status, estimate_break_fluence, test_passed, ClassifyError, ResetLog, RunParams};
use crate::domain::{BeamSpec, EventKind, EventLog, EventTag, Health, Measured, Species, TelemetryRecord, Unit};
use crate::io::{EventLogHeader, ReferenceTables};
use crate::physics::{self, Environment, EnvironmentFlux, PhysicsError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

/// Files an analysis row was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub events: String,
    pub telemetry: Option<String>,
    pub config_digest: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub run_params: RunParams,
    /// Reading uncertainty of the absorbed current, mA.
    pub current_uncertainty: f64,
    /// Span averaged for the current before and after irradiation, s.
    pub current_window: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            run_params: RunParams::default(),
            current_uncertainty: 0.5,
            current_window: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRow {
    pub sample: String,
    pub species: Species,
    pub beam_on: bool,
    pub provenance: Provenance,
    pub total_duration: f64,
    /// Time spent in the beam, s.
    pub irradiation_time: f64,
    /// Effective fluence, cm⁻².
    pub fluence: f64,
    pub fluence_uncertainty: f64,
    /// Ions only.
    pub dose_gy: Option<f64>,
    pub sel: u64,
    pub fw_block: u64,
    pub resets: u64,
    /// Undefined without fluence.
    pub sigma: Option<f64>,
    pub rate: Option<f64>,
    pub period: Option<f64>,
    /// Flux estimated from scintillator windows, when there were any.
    pub scintillator_flux: Option<f64>,
    pub current_before: Option<Measured>,
    pub current_after: Option<Measured>,
    pub passed: Option<bool>,
    pub verdict: Health,
    pub break_time: Option<f64>,
    pub fluence_before_break: Option<f64>,
}

fn mean_current(records: &[&TelemetryRecord]) -> Option<f64> {
    if records.is_empty() {
        return None;
    }
    Some(records.iter().map(|r| r.current_sum * 1000.0).sum::<f64>() / records.len() as f64)
}

fn scintillator_flux(events: &EventLog, background: f64) -> Option<f64> {
    let (mut counts, mut exposure) = (0u64, 0.0);
    for e in events.iter() {
        if let EventKind::ScintCount { counts: c, window, area } = e.kind {
            counts += c;
            exposure += window * area;
        }
    }
    (exposure > 0.0).then(|| (counts as f64 / exposure - background).max(0.0))
}

/// Analyzes one campaign from its event log and, when available, its
/// telemetry.
pub fn analyze_run(
    events: &EventLog,
    header: &EventLogHeader,
    beam: &BeamSpec,
    telemetry: Option<&[TelemetryRecord]>,
    provenance: Provenance,
    opts: &AnalysisOptions,
) -> Result<AnalysisRow, AnalysisError> {
    let timeline = header.timeline();
    let irradiation_time = if header.beam_on { timeline.gpio_time() } else { 0.0 };
    let flux = if header.beam_on { beam.nominal_flux } else { 0.0 };
    let background = beam.background.with_unit(Unit::Flux).map_err(PhysicsError::from)?;
    let fluence = physics::effective_fluence(flux, irradiation_time, &background)?;

    let sel = events.count(EventTag::Sel) as u64;
    let fw_block = events.count(EventTag::FwBlock) as u64;
    let sigma = (fluence.value() > 0.0)
        .then(|| physics::sel_fw_cross_section(sel, fw_block, fluence.value()))
        .transpose()?;
    let rate = sigma.map(|s| physics::event_rate(s, flux)).transpose()?;
    let period = rate.and_then(|r| physics::mean_period(r).ok());
    let dose_gy = (beam.species.is_ion() && header.beam_on)
        .then(|| physics::dose_gy(fluence.value(), beam.let_))
        .transpose()?;

    let (current_before, current_after) = match telemetry {
        Some(records) => {
            let powered: Vec<&TelemetryRecord> = records.iter().filter(|r| r.power_on).collect();
            let w = opts.current_window;
            let first = powered.first().map(|r| r.t).unwrap_or(0.0);
            let last = powered.last().map(|r| r.t).unwrap_or(0.0);
            let head: Vec<_> = powered.iter().copied().filter(|r| r.t < first + w).collect();
            let tail: Vec<_> = powered.iter().copied().filter(|r| r.t > last - w).collect();
            let m = |v: Option<f64>| v.map(|x| Measured::new(x, opts.current_uncertainty));
            (m(mean_current(&head)), m(mean_current(&tail)))
        }
        None => (None, None),
    };
    let passed = match (current_before, current_after) {
        (Some(a), Some(b)) => Some(test_passed(a, b, &header.eeprom_pre, &header.eeprom_post)),
        _ => None,
    };

    let log = ResetLog::from_events(events, &timeline, header.gpio_cycle, header.gpio_gap);
    let verdict = chip_status(&log, None, &opts.run_params)?;
    let beam_profile = timeline.flux_profile(flux, 0.0);
    let fluence_before_break = verdict
        .break_time
        .map(|t| estimate_break_fluence(t, &beam_profile))
        .transpose()?;

    Ok(AnalysisRow {
        sample: header.campaign.clone(),
        species: beam.species,
        beam_on: header.beam_on,
        provenance,
        total_duration: header.total_duration,
        irradiation_time,
        fluence: fluence.value(),
        fluence_uncertainty: fluence.uncertainty(),
        dose_gy,
        sel,
        fw_block,
        resets: log.resets.len() as u64,
        sigma,
        rate,
        period,
        scintillator_flux: scintillator_flux(events, beam.background.value),
        current_before,
        current_after,
        passed,
        verdict: verdict.status,
        break_time: verdict.break_time,
        fluence_before_break,
    })
}

/// A run's cross-section carried to an orbital environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationRow {
    pub sample: String,
    #[serde(rename = "let")]
    pub let_: f64,
    pub environment: Environment,
    pub sigma: f64,
    pub flux: f64,
    pub rate: f64,
    pub period: Option<f64>,
    pub mission_events: f64,
}

/// LEO and GEO ion fluxes tabulated for `let_`, if any.
pub fn orbital_fluxes(tables: &ReferenceTables, let_: f64) -> Vec<EnvironmentFlux> {
    tables
        .rate_block
        .iter()
        .filter(|b| b.let_.value() == let_)
        .flat_map(|b| b.rows.iter())
        .filter(|r| r.environment != Environment::Experiment)
        .map(|r| EnvironmentFlux {
            name: r.environment,
            let_,
            flux: r.flux.value(),
        })
        .collect()
}

/// Experiment, LEO and GEO rates for an ion run with a defined σ.
pub fn extrapolate_row(
    row: &AnalysisRow,
    let_: f64,
    tables: &ReferenceTables,
    mission_years: f64,
) -> Result<Vec<ExtrapolationRow>, AnalysisError> {
    let Some(sigma) = row.sigma else {
        return Ok(Vec::new());
    };
    let experiment = EnvironmentFlux {
        name: Environment::Experiment,
        let_,
        flux: row.fluence / row.irradiation_time,
    };
    let mission = physics::mission_seconds(mission_years);
    std::iter::once(experiment)
        .chain(orbital_fluxes(tables, let_))
        .map(|env| {
            let x = physics::extrapolate(sigma, env, mission)?;
            Ok(ExtrapolationRow {
                sample: row.sample.clone(),
                let_,
                environment: env.name,
                sigma,
                flux: env.flux,
                rate: x.rate,
                period: x.period,
                mission_events: x.mission_events,
            })
        })
        .collect()
}

/// Two-column data series, rendered with a comment header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub provenance: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn render(&self) -> String {
        let mut out = format!("# {}\n# source: {}\n# {} {}\n", self.name, self.provenance, self.x_label, self.y_label);
        for (x, y) in &self.points {
            let _ = writeln!(out, "{x} {y}");
        }
        out
    }
}

/// Cumulative in-beam fluence sampled every `step` seconds and at every
/// phase boundary.
pub fn fluence_series(header: &EventLogHeader, beam: &BeamSpec, step: f64, provenance: &str) -> Series {
    let timeline = header.timeline();
    let flux = if header.beam_on { beam.nominal_flux } else { 0.0 };
    let profile = timeline.flux_profile(flux, 0.0);
    let mut ts: Vec<f64> = timeline.segments().iter().flat_map(|s| [s.start, s.end]).collect();
    let n = (timeline.end() / step).floor() as u64;
    ts.extend((0..=n).map(|k| k as f64 * step));
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    Series {
        name: format!("{} cumulative fluence", header.campaign),
        provenance: provenance.to_string(),
        x_label: "t_s".into(),
        y_label: "fluence_per_cm2".into(),
        points: ts.into_iter().map(|t| (t, profile.fluence_at(t))).collect(),
    }
}

/// ADC supply current of every powered record.
pub fn adc_current_series(name: &str, records: &[TelemetryRecord], provenance: &str) -> Series {
    Series {
        name: format!("{name} ADC supply current"),
        provenance: provenance.to_string(),
        x_label: "t_s".into(),
        y_label: "current_ma".into(),
        points: records
            .iter()
            .filter_map(|r| r.adc_current().map(|c| (r.t, c)))
            .collect(),
    }
}

/// Everything `report` renders.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportBundle {
    pub rows: Vec<AnalysisRow>,
    pub extrapolations: Vec<ExtrapolationRow>,
    pub series: Vec<Series>,
}

impl ReportBundle {
    pub fn merge(&mut self, other: ReportBundle) {
        self.rows.extend(other.rows);
        self.extrapolations.extend(other.extrapolations);
        self.series.extend(other.series);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty() && self.extrapolations.is_empty() && self.series.is_empty()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "--".into())
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "Yes"
    } else {
        "No"
    }
}

/// Delimited tables shaped like the published ones, as (file stem, text).
pub fn render_tables(bundle: &ReportBundle) -> Vec<(&'static str, String)> {
    let irradiated: Vec<&AnalysisRow> = bundle.rows.iter().filter(|r| r.beam_on).collect();
    let ions: Vec<&&AnalysisRow> = irradiated.iter().filter(|r| r.species.is_ion()).collect();
    let neutrons: Vec<&&AnalysisRow> = irradiated.iter().filter(|r| !r.species.is_ion()).collect();

    let mut ion_results = String::from("sample,species,fluence_per_cm2,irradiation_time_s,absorbed_current_ma,test_passed,source\n");
    let mut cross = String::from("sample,fluence_per_cm2,sel,fw_block,sigma_cm2,source\n");
    for r in &ions {
        let current = r
            .current_after
            .map(|m| format!("{:.1} ± {:.1}", m.value, m.uncertainty))
            .unwrap_or_else(|| "--".into());
        let passed = r.passed.map(yes_no).unwrap_or("--");
        let _ = writeln!(
            ion_results,
            "{},{:?},{:.3e},{},{current},{passed},{}",
            r.sample, r.species, r.fluence, r.irradiation_time, r.provenance.events
        );
        let _ = writeln!(
            cross,
            "{},{:.3e},{},{},{},{}",
            r.sample,
            r.fluence,
            r.sel,
            r.fw_block,
            opt(r.sigma).replace("--", "undefined"),
            r.provenance.events
        );
    }

    let mut rates = String::from("sample,let,environment,sigma_cm2,flux_per_cm2_s,rate_per_s,period_s,mission_events\n");
    for x in &bundle.extrapolations {
        let _ = writeln!(
            rates,
            "{},{},{},{:.3e},{:.3e},{:.3e},{},{:.3e}",
            x.sample,
            x.let_,
            x.environment.as_str(),
            x.sigma,
            x.flux,
            x.rate,
            opt(x.period),
            x.mission_events
        );
    }

    let mut neutron = String::from("sample,total_fluence_per_cm2,fluence_before_breaking,irradiation_time_s,broken,source\n");
    let mut resets = String::from("sample,resets_during_irradiation,resets_during_radiationless_tests\n");
    for r in &neutrons {
        let _ = writeln!(
            neutron,
            "{},{:.3e},{},{},{},{}",
            r.sample,
            r.fluence,
            opt(r.fluence_before_break),
            r.irradiation_time,
            yes_no(r.verdict == Health::Broken),
            r.provenance.events
        );
        let later: Vec<String> = bundle
            .rows
            .iter()
            .filter(|o| !o.beam_on && o.sample == r.sample)
            .map(|o| o.resets.to_string())
            .collect();
        let later = if later.is_empty() { "--".to_string() } else { later.join(";") };
        let _ = writeln!(resets, "{},{},{later}", r.sample, r.resets);
    }

    vec![
        ("ion_results", ion_results),
        ("cross_sections", cross),
        ("flux_and_rates", rates),
        ("neutron_results", neutron),
        ("resets_summary", resets),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::CampaignConfig;
    use crate::io::load_reference_tables;
    use crate::simulator::run_campaign;

    fn header_for(cfg: &CampaignConfig) -> EventLogHeader {
        EventLogHeader {
            format_version: 1,
            campaign: cfg.campaign.clone(),
            config_digest: "x".into(),
            seed: cfg.seed,
            total_duration: cfg.total_duration,
            gpio_phase: cfg.phase_plan.gpio,
            beam_phase: cfg.phase_plan.beam_monitor,
            gpio_cycle: cfg.gpio_cycle,
            gpio_gap: cfg.gpio_gap,
            beam_on: cfg.beam_on,
            eeprom_pre: "a".into(),
            eeprom_post: "a".into(),
        }
    }

    fn prov() -> Provenance {
        Provenance {
            events: "events.csv".into(),
            telemetry: None,
            config_digest: "x".into(),
            seed: 0,
        }
    }

    #[test]
    fn exactly_816_blocks_give_published_sigma_and_dose() {
        let mut cfg = CampaignConfig::new(BeamSpec::kr84(1.01e7 / 6027.0), 6427.0);
        cfg.campaign = "ST01".into();
        let mut log = EventLog::new();
        for i in 0..816 {
            log.push(i as f64, EventKind::FwBlock { masked: false }).unwrap();
        }
        let row = analyze_run(&log, &header_for(&cfg), &cfg.beam, None, prov(), &AnalysisOptions::default()).unwrap();
        assert!((row.irradiation_time - 6027.0).abs() < 1e-9);
        assert!((row.fluence / 1.01e7 - 1.0).abs() < 1e-12);
        assert_eq!(physics::round_sig(row.sigma.unwrap(), 3), 8.08e-5);
        assert!((row.dose_gy.unwrap() - 72.8).abs() < 0.05);
        // background (5 /cm²/s) integrated over the in-beam time
        assert!((row.fluence_uncertainty - 5.0 * 6027.0).abs() < 1e-6);
    }

    #[test]
    fn dark_run_has_undefined_sigma() {
        let mut cfg = CampaignConfig::new(BeamSpec::kr84(1.68e3), 300.0);
        cfg.beam_on = false;
        let run = run_campaign(&cfg).unwrap();
        let row = analyze_run(
            &run.events,
            &header_for(&cfg),
            &cfg.beam,
            Some(&run.telemetry),
            prov(),
            &AnalysisOptions::default(),
        )
        .unwrap();
        assert_eq!(row.fw_block + row.sel, 0);
        assert_eq!(row.sigma, None);
        assert_eq!(row.dose_gy, None);
        assert_eq!(row.passed, Some(true));
    }

    #[test]
    fn st08_like_counts() {
        let cfg = CampaignConfig::new(BeamSpec::kr78(2.6e5 / 900.0), 940.0);
        let mut log = EventLog::new();
        for i in 0..15 {
            log.push(i as f64 * 10.0, EventKind::FwBlock { masked: false }).unwrap();
        }
        let mut h = header_for(&cfg);
        h.total_duration = 900.0;
        h.gpio_phase = f64::INFINITY;
        h.beam_phase = 0.0;
        let row = analyze_run(&log, &h, &cfg.beam, None, prov(), &AnalysisOptions::default()).unwrap();
        assert_eq!(physics::round_sig(row.sigma.unwrap(), 3), 5.77e-5);
    }

    #[test]
    fn extrapolation_uses_tabulated_orbits() {
        let tables = load_reference_tables().unwrap();
        assert_eq!(orbital_fluxes(&tables, 45.0).len(), 2);
        assert!(orbital_fluxes(&tables, 12.0).is_empty());
        let mut cfg = CampaignConfig::new(BeamSpec::kr84(1.01e7 / 6027.0), 6427.0);
        cfg.campaign = "ST01".into();
        let mut log = EventLog::new();
        for i in 0..816 {
            log.push(i as f64, EventKind::FwBlock { masked: false }).unwrap();
        }
        let row = analyze_run(&log, &header_for(&cfg), &cfg.beam, None, prov(), &AnalysisOptions::default()).unwrap();
        let x = extrapolate_row(&row, 45.0, &tables, 3.0).unwrap();
        assert_eq!(x.len(), 3);
        let leo = x.iter().find(|r| r.environment == Environment::Leo).unwrap();
        assert!((leo.rate / 1.87e-12 - 1.0).abs() < 0.01);
    }

    #[test]
    fn tables_have_expected_shapes() {
        let bundle = ReportBundle::default();
        let tables = render_tables(&bundle);
        assert_eq!(tables.len(), 5);
        assert!(tables.iter().all(|(_, t)| t.lines().count() == 1));
    }

    #[test]
    fn series_render_two_columns() {
        let s = Series {
            name: "n".into(),
            provenance: "p".into(),
            x_label: "t_s".into(),
            y_label: "y".into(),
            points: vec![(0.0, 1.0), (0.1, 2.5)],
        };
        let text = s.render();
        assert!(text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .all(|l| l.split(' ').count() == 2));
    }
}
