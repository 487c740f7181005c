//! Published irradiation results compiled into the library, with their
//! printed precision.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::Species;
use crate::physics::{round_sig, Environment};

const FIXTURE: &str = include_str!("../../fixtures/reference_tables.toml");
const FIXTURE_SHA256: &str = "e12fe33cdfdaef3201f95e5bccd14a90ecdbd8ea768d8bf5f2420fa2ee12bc62";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FixtureError {
    #[error("reference tables corrupted: sha256 {found}, expected {expected}")]
    Corrupt { expected: String, found: String },
    #[error("reference tables unreadable: {0}")]
    Parse(String),
}

/// A number as printed, remembering how many significant digits it had.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Printed {
    text: String,
    value: f64,
    sig: u32,
}

impl Printed {
    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn significant_digits(&self) -> u32 {
        self.sig
    }

    /// `computed` rounds to the printed figure.
    pub fn agrees(&self, computed: f64) -> bool {
        let rounded = round_sig(computed, self.sig);
        (rounded - self.value).abs() <= 1e-9 * self.value.abs().max(f64::MIN_POSITIVE)
    }

    /// |computed − printed| / |printed|.
    pub fn relative_error(&self, computed: f64) -> f64 {
        ((computed - self.value) / self.value).abs()
    }
}

impl FromStr for Printed {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let value: f64 = text.parse().map_err(|_| format!("`{text}` is not a number"))?;
        let mantissa = text.split(['e', 'E']).next().unwrap_or(text);
        let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
        let sig = digits.trim_start_matches('0').len().max(1) as u32;
        Ok(Self {
            text: text.to_string(),
            value,
            sig,
        })
    }
}

impl TryFrom<String> for Printed {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Printed> for String {
    fn from(p: Printed) -> Self {
        p.text
    }
}

impl fmt::Display for Printed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Which published table a value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Kr84Results,
    Kr78Results,
    CrossSections,
    FluxAndRates,
    NeutronResults,
    ResetSummary,
    #[default]
    Text,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Kr84Results => "84Kr irradiation results",
            Source::Kr78Results => "78Kr irradiation results",
            Source::CrossSections => "SEL and FW block cross-sections",
            Source::FluxAndRates => "flux and event rates",
            Source::NeutronResults => "neutron irradiation results",
            Source::ResetSummary => "samples resets summary",
            Source::Text => "text",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IonRow {
    pub sample: String,
    pub species: Species,
    #[serde(rename = "let")]
    pub let_: Printed,
    /// ions·cm⁻².
    pub fluence: Printed,
    pub irradiation_time: Printed,
    /// After irradiation, mA.
    pub absorbed_current: Printed,
    pub current_uncertainty: Printed,
    pub passed: bool,
    #[serde(skip)]
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossSectionRow {
    pub sample: String,
    pub fluence: Printed,
    pub sel: u64,
    pub fw_block: u64,
    pub sigma: Printed,
    #[serde(skip)]
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateRow {
    pub environment: Environment,
    pub flux: Printed,
    pub rate: Printed,
}

/// One LET block: the cross-section of a sample carried to the
/// experiment, LEO and GEO fluxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateBlock {
    #[serde(rename = "let")]
    pub let_: Printed,
    pub sample: String,
    pub sigma: Printed,
    pub rows: Vec<RateRow>,
    #[serde(skip)]
    pub source: Source,
}

impl RateBlock {
    pub fn row(&self, env: Environment) -> Option<&RateRow> {
        self.rows.iter().find(|r| r.environment == env)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeutronRow {
    pub sample: String,
    pub total_fluence: Printed,
    #[serde(default)]
    pub fluence_before_break: Option<Printed>,
    pub irradiation_time: Printed,
    pub broken: bool,
    /// The break was only seen after irradiation and placed at its end.
    #[serde(default)]
    pub break_assumed_at_end: bool,
    #[serde(skip)]
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResetRow {
    pub sample: String,
    pub irradiation: u64,
    /// `None` where the printed cell is blank.
    #[serde(default)]
    pub radiationless: Option<u64>,
    pub after_60_days: u64,
    #[serde(default)]
    pub after_transistor: Option<u64>,
    #[serde(skip)]
    pub source: Source,
}

/// Dose range quoted for one ion, Gy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoseRange {
    pub species: Species,
    pub min: Printed,
    pub max: Printed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodRow {
    pub environment: Environment,
    pub period: Printed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionCountRow {
    pub environment: Environment,
    pub count: Printed,
}

/// Periods between FW blocks of the LET 45 sample and the expected count
/// over a mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mission {
    /// Sample whose cross-section the periods and counts use.
    pub sample: String,
    pub years: Printed,
    pub periods: Vec<PeriodRow>,
    pub events: Vec<MissionCountRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conditions {
    pub background_flux: Printed,
    pub background_uncertainty: Printed,
    pub baseline_current: Printed,
    pub baseline_uncertainty: Printed,
    pub temperature: Printed,
    pub temperature_uncertainty: Printed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceTables {
    pub ion: Vec<IonRow>,
    pub cross_section: Vec<CrossSectionRow>,
    pub rate_block: Vec<RateBlock>,
    pub neutron: Vec<NeutronRow>,
    pub resets: Vec<ResetRow>,
    pub dose: Vec<DoseRange>,
    pub mission: Mission,
    pub conditions: Conditions,
}

impl ReferenceTables {
    pub fn ion(&self, sample: &str) -> Option<&IonRow> {
        self.ion.iter().find(|r| r.sample == sample)
    }

    pub fn cross_section(&self, sample: &str) -> Option<&CrossSectionRow> {
        self.cross_section.iter().find(|r| r.sample == sample)
    }

    pub fn neutron(&self, sample: &str) -> Option<&NeutronRow> {
        self.neutron.iter().find(|r| r.sample == sample)
    }

    pub fn resets(&self, sample: &str) -> Option<&ResetRow> {
        self.resets.iter().find(|r| r.sample == sample)
    }

    /// Block for a sample's cross-section, e.g. "ST01".
    pub fn rate_block(&self, sample: &str) -> Option<&RateBlock> {
        self.rate_block.iter().find(|b| b.sample == sample)
    }

    pub fn dose_range(&self, species: Species) -> Option<&DoseRange> {
        self.dose.iter().find(|d| d.species == species)
    }

    fn tag_sources(&mut self) {
        for r in &mut self.ion {
            r.source = match r.species {
                Species::Kr78 => Source::Kr78Results,
                _ => Source::Kr84Results,
            };
        }
        self.cross_section.iter_mut().for_each(|r| r.source = Source::CrossSections);
        self.rate_block.iter_mut().for_each(|r| r.source = Source::FluxAndRates);
        self.neutron.iter_mut().for_each(|r| r.source = Source::NeutronResults);
        self.resets.iter_mut().for_each(|r| r.source = Source::ResetSummary);
    }
}

pub fn fixture_text() -> &'static str {
    FIXTURE
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// The embedded tables, after checking their digest.
pub fn load_reference_tables() -> Result<ReferenceTables, FixtureError> {
    load_reference_tables_from(FIXTURE, FIXTURE_SHA256)
}

pub fn load_reference_tables_from(text: &str, expected_sha256: &str) -> Result<ReferenceTables, FixtureError> {
    let found = sha256_hex(text);
    if found != expected_sha256 {
        return Err(FixtureError::Corrupt {
            expected: expected_sha256.to_string(),
            found,
        });
    }
    let mut tables: ReferenceTables = toml::from_str(text).map_err(|e| FixtureError::Parse(e.to_string()))?;
    tables.tag_sources();
    Ok(tables)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_precision() {
        let p: Printed = "8.08e-5".parse().unwrap();
        assert_eq!(p.significant_digits(), 3);
        assert!(p.agrees(816.0 / 1.01e7));
        assert!(!p.agrees(8.2e-5));
        assert_eq!("0.026e7".parse::<Printed>().unwrap().significant_digits(), 2);
        assert_eq!("15.14".parse::<Printed>().unwrap().significant_digits(), 4);
        assert_eq!("50.0".parse::<Printed>().unwrap().significant_digits(), 3);
        assert!("n/a".parse::<Printed>().is_err());
    }

    #[test]
    fn embedded_tables_load_and_are_complete() {
        let t = load_reference_tables().unwrap();
        assert_eq!(t.ion.len(), 8);
        assert_eq!(t.cross_section.len(), 8);
        assert_eq!(t.neutron.len(), 7);
        assert_eq!(t.resets.len(), 7);
        assert_eq!(t.rate_block.len(), 2);
        assert!(t.rate_block.iter().all(|b| b.rows.len() == 3));
    }

    #[test]
    fn lookups() {
        let t = load_reference_tables().unwrap();
        assert_eq!(t.cross_section("ST05").unwrap().fw_block, 1248);
        assert_eq!(t.neutron("S7").unwrap().fluence_before_break.as_ref().unwrap().value(), 5.89e9);
        assert_eq!(t.resets("S13").unwrap().after_transistor, Some(12));
        assert_eq!(t.resets("S15").unwrap().radiationless, None);
        assert_eq!(t.ion("ST08").unwrap().source, Source::Kr78Results);
        assert_eq!(t.neutron("S3").unwrap().source, Source::NeutronResults);
        assert_eq!(t.rate_block("ST04").unwrap().let_.value(), 34.0);
    }

    #[test]
    fn tampering_detected() {
        let bad = FIXTURE.replace("fw_block = 1248", "fw_block = 1249");
        assert!(matches!(
            load_reference_tables_from(&bad, FIXTURE_SHA256),
            Err(FixtureError::Corrupt { .. })
        ));
    }
}
