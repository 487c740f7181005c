//! Recomputes every derivable published number from the upstream values in
//! the reference tables and compares it with what was printed.

use std::fmt;

use serde::Serialize;

use crate::domain::Species;
use crate::io::{Printed, ReferenceTables, Source};
use crate::physics::{self, Environment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    CrossSection,
    Flux,
    Rate,
    Period,
    MissionCount,
    Dose,
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckKind::CrossSection => "cross-section",
            CheckKind::Flux => "flux",
            CheckKind::Rate => "rate",
            CheckKind::Period => "period",
            CheckKind::MissionCount => "mission count",
            CheckKind::Dose => "dose",
        })
    }
}

/// How a computed value is compared with the printed one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Must round to the printed digits.
    Rounds,
    /// Relative deviation at most this much.
    Within(f64),
}

/// Relative tolerances for values that went through a rounding chain in
/// print.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub rate: f64,
    pub period: f64,
    pub mission: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rate: 0.01,
            period: 0.01,
            mission: 0.02,
        }
    }
}

impl Tolerances {
    pub fn scaled(self, k: f64) -> Self {
        Self {
            rate: self.rate * k,
            period: self.period * k,
            mission: self.mission * k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub kind: CheckKind,
    pub label: String,
    pub source: Source,
    pub printed: Printed,
    pub computed: f64,
    pub rule: Rule,
    pub passed: bool,
}

impl Check {
    fn new(kind: CheckKind, label: String, source: Source, printed: &Printed, computed: f64, rule: Rule) -> Self {
        let passed = computed.is_finite()
            && match rule {
                Rule::Rounds => printed.agrees(computed),
                Rule::Within(tol) => printed.relative_error(computed) <= tol,
            };
        Self {
            kind,
            label,
            source,
            printed: printed.clone(),
            computed,
            rule,
            passed,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rule = match self.rule {
            Rule::Rounds => format!("{} s.f.", self.printed.significant_digits()),
            Rule::Within(tol) => format!(
                "{:.3}% <= {:.1}%",
                100.0 * self.printed.relative_error(self.computed),
                100.0 * tol
            ),
        };
        write!(
            f,
            "{} {:<14} {:<28} printed {:<9} computed {:<12.5e} ({rule})",
            if self.passed { "PASS" } else { "FAIL" },
            self.kind,
            self.label,
            self.printed.text(),
            self.computed,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    /// Rows that could not be checked because an upstream value is missing.
    pub missing: Vec<String>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.missing.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn of_kind(&self, kind: CheckKind) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(move |c| c.kind == kind)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        for m in &self.missing {
            writeln!(f, "FAIL missing        {m}")?;
        }
        let passed = self.checks.iter().filter(|c| c.passed).count();
        write!(f, "{passed}/{} checks passed", self.checks.len() + self.missing.len())
    }
}

fn env_label(env: Environment) -> &'static str {
    env.as_str()
}

/// Runs every check against `tables`.
pub fn verify(tables: &ReferenceTables, tol: &Tolerances) -> VerifyReport {
    let mut checks = Vec::new();
    let mut missing = Vec::new();

    let sigma_of = |sample: &str| -> Option<f64> {
        let row = tables.cross_section(sample)?;
        physics::sel_fw_cross_section(row.sel, row.fw_block, row.fluence.value()).ok()
    };

    for row in &tables.cross_section {
        let sigma = physics::sel_fw_cross_section(row.sel, row.fw_block, row.fluence.value()).unwrap_or(f64::NAN);
        checks.push(Check::new(
            CheckKind::CrossSection,
            format!("sigma {}", row.sample),
            row.source,
            &row.sigma,
            sigma,
            Rule::Rounds,
        ));
    }

    let mut rates_45 = Vec::new();
    for block in &tables.rate_block {
        let (Some(sigma), Some(ion)) = (sigma_of(&block.sample), tables.ion(&block.sample)) else {
            missing.push(format!("rate block of {}", block.sample));
            continue;
        };
        checks.push(Check::new(
            CheckKind::CrossSection,
            format!("sigma LET {}", block.let_),
            block.source,
            &block.sigma,
            sigma,
            Rule::Rounds,
        ));
        for row in &block.rows {
            let flux = match row.environment {
                Environment::Experiment => {
                    let flux = physics::mean_flux(ion.fluence.value(), ion.irradiation_time.value())
                        .unwrap_or(f64::NAN);
                    checks.push(Check::new(
                        CheckKind::Flux,
                        format!("flux {} ({})", env_label(row.environment), block.sample),
                        block.source,
                        &row.flux,
                        flux,
                        Rule::Rounds,
                    ));
                    flux
                }
                _ => row.flux.value(),
            };
            let rate = physics::event_rate(sigma, flux).unwrap_or(f64::NAN);
            checks.push(Check::new(
                CheckKind::Rate,
                format!("rate {} LET {}", env_label(row.environment), block.let_),
                block.source,
                &row.rate,
                rate,
                Rule::Within(tol.rate),
            ));
            if block.sample == tables.mission.sample {
                rates_45.push((row.environment, rate));
            }
        }
    }

    let mission = &tables.mission;
    let mission_s = physics::mission_seconds(mission.years.value());
    let rate_in = |env: Environment| rates_45.iter().find(|(e, _)| *e == env).map(|(_, r)| *r);
    for p in &mission.periods {
        match rate_in(p.environment).map(physics::mean_period) {
            Some(Ok(period)) => checks.push(Check::new(
                CheckKind::Period,
                format!("period {} ({})", env_label(p.environment), mission.sample),
                Source::Text,
                &p.period,
                period,
                Rule::Within(tol.period),
            )),
            _ => missing.push(format!("period {}", env_label(p.environment))),
        }
    }
    for m in &mission.events {
        match rate_in(m.environment).map(|r| physics::expected_mission_events(r, mission_s)) {
            Some(Ok(n)) => checks.push(Check::new(
                CheckKind::MissionCount,
                format!("{}-year count {}", mission.years, env_label(m.environment)),
                Source::Text,
                &m.count,
                n,
                Rule::Within(tol.mission),
            )),
            _ => missing.push(format!("mission count {}", env_label(m.environment))),
        }
    }

    for range in &tables.dose {
        let rows: Vec<_> = tables.ion.iter().filter(|r| r.species == range.species).collect();
        let min = rows.iter().min_by(|a, b| a.fluence.value().total_cmp(&b.fluence.value()));
        let max = rows.iter().max_by(|a, b| a.fluence.value().total_cmp(&b.fluence.value()));
        let (Some(min), Some(max)) = (min, max) else {
            missing.push(format!("dose range {}", species_label(range.species)));
            continue;
        };
        for (bound, row, printed) in [("min", min, &range.min), ("max", max, &range.max)] {
            let dose = physics::dose_gy(row.fluence.value(), row.let_.value()).unwrap_or(f64::NAN);
            checks.push(Check::new(
                CheckKind::Dose,
                format!("dose {} {bound} ({})", species_label(range.species), row.sample),
                Source::Text,
                printed,
                dose,
                Rule::Rounds,
            ));
        }
    }

    VerifyReport { checks, missing }
}

fn species_label(s: Species) -> &'static str {
    match s {
        Species::Kr84 => "84Kr",
        Species::Kr78 => "78Kr",
        Species::AtmosphericNeutron => "neutron",
    }
}
