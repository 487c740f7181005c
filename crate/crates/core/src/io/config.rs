//! TOML campaign configurations and the bundled presets.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{validate, CampaignConfig, Violation};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("config field `{path}`: {message}")]
    Field { path: String, message: String },
    #[error("set either total_duration or irradiation_time, not both")]
    Conflict,
    #[error("invalid config: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

/// Parses and validates a campaign config. Unknown keys are rejected and
/// omitted keys take the protocol defaults.
///
/// Besides the fields of [`CampaignConfig`], a top-level `irradiation_time`
/// may replace `total_duration`: the campaign then lasts long enough under
/// its phase plan to spend that many seconds in the beam.
pub fn load_campaign_config(source: &str) -> Result<CampaignConfig, ConfigError> {
    let mut table: toml::Table = source.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    let irradiation = match table.remove("irradiation_time") {
        None => None,
        Some(v) => Some(v.as_float().or_else(|| v.as_integer().map(|i| i as f64)).ok_or_else(|| {
            ConfigError::Field {
                path: "irradiation_time".into(),
                message: format!("expected a number, found {}", v.type_str()),
            }
        })?),
    };
    if irradiation.is_some() {
        if table.contains_key("total_duration") {
            return Err(ConfigError::Conflict);
        }
        table.insert("total_duration".into(), toml::Value::Float(0.0));
    }
    let mut config: CampaignConfig =
        serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| ConfigError::Field {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    if let Some(t) = irradiation {
        config.total_duration = config.phase_plan.duration_for_irradiation(t);
    }
    let violations = validate(&config);
    if violations.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError::Invalid(violations))
    }
}

/// Canonical TOML rendering; loading it gives back the same config.
pub fn write_campaign_config(config: &CampaignConfig) -> String {
    toml::to_string(config).expect("campaign configs always serialize")
}

/// SHA-256 of the canonical rendering, hex encoded.
pub fn config_digest(config: &CampaignConfig) -> String {
    hex::encode(Sha256::digest(write_campaign_config(config).as_bytes()))
}

macro_rules! presets {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../presets/", $name, ".toml")))),*]
    };
}

/// Bundled campaign presets: the eight heavy-ion samples and the seven
/// neutron samples.
pub const PRESETS: &[(&str, &str)] = presets!(
    "ST01", "ST02", "ST03", "ST04", "ST05", "ST06", "ST07", "ST08", "S3", "S5", "S7", "S9", "S10",
    "S13", "S15",
);

pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, s)| *s)
}

pub fn load_preset(name: &str) -> Result<CampaignConfig, ConfigError> {
    load_campaign_config(preset_source(name).ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))?)
}
