//! On-disk formats: telemetry and event logs, campaign configs, and the
//! embedded reference tables.

mod config;
mod events;
mod fixtures;
mod telemetry;

use thiserror::Error;

pub use config::{
    config_digest, load_campaign_config, load_preset, preset_source, write_campaign_config, ConfigError, PRESETS,
};
pub use events::{format_event, parse_events, write_events, EventLogHeader};
pub use fixtures::{
    fixture_text, load_reference_tables, load_reference_tables_from, sha256_hex, Conditions, CrossSectionRow,
    DoseRange, FixtureError, IonRow, Mission, MissionCountRow, NeutronRow, PeriodRow, Printed, RateBlock, RateRow,
    ReferenceTables, ResetRow, Source,
};
pub use telemetry::{parse_telemetry, write_telemetry, TelemetryHeader};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("write failed after {written} bytes: {source}")]
    Sink { written: u64, source: std::io::Error },
    #[error("record {index} is earlier than the one before it")]
    NotOrdered { index: usize },
    #[error("bad header: {0}")]
    BadHeader(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("unsupported format_version {0}, this build reads {FORMAT_VERSION}")]
    UnsupportedVersion(u32),
    #[error("line {line}: expected 14 channels, found {found}")]
    ChannelCount { line: usize, found: usize },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("read failed: {0}")]
    Read(String),
}

impl ParseError {
    fn malformed(line: usize, reason: impl Into<String>) -> Self {
        ParseError::Malformed {
            line,
            reason: reason.into(),
        }
    }
}

type Pairs = Vec<(String, String)>;

/// Consumes the magic line and the `# key=value` lines, returning them with
/// the column line that ends the header.
fn parse_header_lines<I>(lines: &mut I, magic: &str) -> Result<(Pairs, (usize, String)), ParseError>
where
    I: Iterator<Item = (usize, std::io::Result<String>)>,
{
    let mut next = || -> Result<Option<(usize, String)>, ParseError> {
        match lines.next() {
            None => Ok(None),
            Some((n, l)) => l.map(|l| Some((n, l))).map_err(|e| ParseError::Read(e.to_string())),
        }
    };
    match next()? {
        Some((_, l)) if l == magic => {}
        Some((n, _)) => return Err(ParseError::malformed(n, format!("expected `{magic}`"))),
        None => return Err(ParseError::BadHeader("empty input".into())),
    }
    let mut pairs = Vec::new();
    loop {
        let Some((n, line)) = next()? else {
            return Err(ParseError::BadHeader("missing column line".into()));
        };
        let Some(rest) = line.strip_prefix("# ") else {
            return Ok((pairs, (n, line)));
        };
        let (k, v) = rest
            .split_once('=')
            .ok_or_else(|| ParseError::malformed(n, "header line lacks `=`"))?;
        pairs.push((k.to_string(), v.to_string()));
    }
}

fn header_value<'a>(pairs: &'a Pairs, key: &str) -> Result<&'a str, ParseError> {
    pairs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| ParseError::BadHeader(format!("missing `{key}`")))
}

fn check_version(pairs: &Pairs) -> Result<u32, ParseError> {
    let v: u32 = header_value(pairs, "format_version")?
        .parse()
        .map_err(|_| ParseError::BadHeader("format_version is not an integer".into()))?;
    if v != FORMAT_VERSION {
        return Err(ParseError::UnsupportedVersion(v));
    }
    Ok(v)
}
