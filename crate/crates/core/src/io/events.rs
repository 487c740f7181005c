//! Line-oriented event logs: a versioned header describing the campaign
//! timing, then one `t,kind,payload` line per event.

use std::io::{BufRead, Write};

use crate::domain::{CampaignConfig, Event, EventKind, EventLog, EventTag};
use crate::simulator::{timeline_for, CampaignRun, PhaseTimeline};

use super::{check_version, header_value, parse_header_lines, IoError, ParseError, FORMAT_VERSION};

const MAGIC: &str = "# seebench events";

/// Campaign context needed to interpret an event log on its own.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLogHeader {
    pub format_version: u32,
    pub campaign: String,
    pub config_digest: String,
    pub seed: u64,
    pub total_duration: f64,
    /// In-beam segment length, `inf` for a single segment.
    pub gpio_phase: f64,
    pub beam_phase: f64,
    pub gpio_cycle: f64,
    pub gpio_gap: f64,
    pub beam_on: bool,
    pub eeprom_pre: String,
    pub eeprom_post: String,
}

impl EventLogHeader {
    pub fn for_run(config: &CampaignConfig, config_digest: &str, run: &CampaignRun) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            campaign: config.campaign.clone(),
            config_digest: config_digest.to_string(),
            seed: config.seed,
            total_duration: config.total_duration,
            gpio_phase: config.phase_plan.gpio,
            beam_phase: config.phase_plan.beam_monitor,
            gpio_cycle: config.gpio_cycle,
            gpio_gap: config.gpio_gap,
            beam_on: config.beam_on,
            eeprom_pre: run.eeprom_pre.clone(),
            eeprom_post: run.eeprom_post.clone(),
        }
    }

    pub fn timeline(&self) -> PhaseTimeline {
        timeline_for(self.gpio_phase, self.beam_phase, self.total_duration)
    }

    pub fn test_windows(&self) -> Vec<(f64, f64)> {
        self.timeline().test_windows(self.gpio_cycle, self.gpio_gap)
    }
}

fn payload(kind: &EventKind) -> String {
    match kind {
        EventKind::FwBlock { masked } => format!("masked={masked}"),
        EventKind::Sel { current_sum } => format!("current_sum={current_sum}"),
        EventKind::Break { fluence } => format!("fluence={fluence}"),
        EventKind::ScintCount { counts, window, area } => {
            format!("counts={counts};window={window};area={area}")
        }
        EventKind::HardReset | EventKind::SoftReset | EventKind::PowerOff | EventKind::PowerOn => String::new(),
    }
}

pub fn format_event(e: &Event) -> String {
    format!("{},{},{}\n", e.t, e.kind.tag().as_str(), payload(&e.kind))
}

pub fn write_events<W: Write>(log: &EventLog, header: &EventLogHeader, mut sink: W) -> Result<u64, IoError> {
    if header.campaign.contains(['\n', '\r']) {
        return Err(IoError::BadHeader("campaign contains a line break".into()));
    }
    let mut written = 0u64;
    let head = format!(
        "{MAGIC}\n# format_version={}\n# campaign={}\n# config_digest={}\n# seed={}\n\
         # total_duration={}\n# gpio_phase={}\n# beam_phase={}\n# gpio_cycle={}\n# gpio_gap={}\n\
         # beam_on={}\n# eeprom_pre={}\n# eeprom_post={}\nt,kind,payload\n",
        header.format_version,
        header.campaign,
        header.config_digest,
        header.seed,
        header.total_duration,
        header.gpio_phase,
        header.beam_phase,
        header.gpio_cycle,
        header.gpio_gap,
        header.beam_on,
        header.eeprom_pre,
        header.eeprom_post,
    );
    for chunk in std::iter::once(head).chain(log.iter().map(format_event)) {
        sink.write_all(chunk.as_bytes())
            .map_err(|source| IoError::Sink { written, source })?;
        written += chunk.len() as u64;
    }
    sink.flush().map_err(|source| IoError::Sink { written, source })?;
    Ok(written)
}

struct Payload<'a> {
    pairs: Vec<(&'a str, &'a str)>,
    line: usize,
}

impl<'a> Payload<'a> {
    fn parse(text: &'a str, line: usize) -> Result<Self, ParseError> {
        let pairs = if text.is_empty() {
            Vec::new()
        } else {
            text.split(';')
                .map(|kv| {
                    kv.split_once('=')
                        .ok_or_else(|| ParseError::malformed(line, format!("payload item `{kv}` lacks `=`")))
                })
                .collect::<Result<_, _>>()?
        };
        Ok(Self { pairs, line })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T, ParseError> {
        let raw = self
            .pairs
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| ParseError::malformed(self.line, format!("payload lacks `{key}`")))?;
        raw.parse()
            .map_err(|_| ParseError::malformed(self.line, format!("bad value `{raw}` for `{key}`")))
    }
}

fn parse_event(text: &str, line: usize) -> Result<Event, ParseError> {
    let mut parts = text.splitn(3, ',');
    let (Some(t), Some(kind), Some(rest)) = (parts.next(), parts.next(), parts.next()) else {
        return Err(ParseError::malformed(line, "expected `t,kind,payload`"));
    };
    let t: f64 = t
        .parse()
        .map_err(|_| ParseError::malformed(line, format!("time `{t}` is not a number")))?;
    let tag: EventTag = kind.parse().map_err(|e: String| ParseError::malformed(line, e))?;
    let p = Payload::parse(rest, line)?;
    let kind = match tag {
        EventTag::FwBlock => EventKind::FwBlock { masked: p.get("masked")? },
        EventTag::Sel => EventKind::Sel {
            current_sum: p.get("current_sum")?,
        },
        EventTag::HardReset => EventKind::HardReset,
        EventTag::SoftReset => EventKind::SoftReset,
        EventTag::Break => EventKind::Break { fluence: p.get("fluence")? },
        EventTag::PowerOff => EventKind::PowerOff,
        EventTag::PowerOn => EventKind::PowerOn,
        EventTag::ScintCount => EventKind::ScintCount {
            counts: p.get("counts")?,
            window: p.get("window")?,
            area: p.get("area")?,
        },
    };
    Ok(Event { t, kind })
}

pub fn parse_events<R: BufRead>(source: R) -> Result<(EventLogHeader, EventLog), ParseError> {
    let mut lines = source.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (pairs, (n, cols)) = parse_header_lines(&mut lines, MAGIC)?;
    if cols != "t,kind,payload" {
        return Err(ParseError::malformed(n, "expected column line `t,kind,payload`"));
    }
    let num = |key: &str| -> Result<f64, ParseError> {
        header_value(&pairs, key)?
            .parse()
            .map_err(|_| ParseError::BadHeader(format!("{key} is not a number")))
    };
    let header = EventLogHeader {
        format_version: check_version(&pairs)?,
        campaign: header_value(&pairs, "campaign")?.to_string(),
        config_digest: header_value(&pairs, "config_digest")?.to_string(),
        seed: header_value(&pairs, "seed")?
            .parse()
            .map_err(|_| ParseError::BadHeader("seed is not an integer".into()))?,
        total_duration: num("total_duration")?,
        gpio_phase: num("gpio_phase")?,
        beam_phase: num("beam_phase")?,
        gpio_cycle: num("gpio_cycle")?,
        gpio_gap: num("gpio_gap")?,
        beam_on: header_value(&pairs, "beam_on")?
            .parse()
            .map_err(|_| ParseError::BadHeader("beam_on is not a boolean".into()))?,
        eeprom_pre: header_value(&pairs, "eeprom_pre")?.to_string(),
        eeprom_post: header_value(&pairs, "eeprom_post")?.to_string(),
    };

    let mut log = EventLog::new();
    for (n, line) in lines {
        let line = line.map_err(|e| ParseError::Read(e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let ev = parse_event(&line, n)?;
        log.push(ev.t, ev.kind)
            .map_err(|e| ParseError::malformed(n, e.to_string()))?;
    }
    Ok((header, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> EventLogHeader {
        EventLogHeader {
            format_version: 1,
            campaign: "S9".into(),
            config_digest: "d1".into(),
            seed: 7,
            total_duration: 10543.0,
            gpio_phase: f64::INFINITY,
            beam_phase: 0.0,
            gpio_cycle: 40.0,
            gpio_gap: 40.0,
            beam_on: true,
            eeprom_pre: "00ff".into(),
            eeprom_post: "00ff".into(),
        }
    }

    fn sample_log() -> EventLog {
        let mut log = EventLog::new();
        log.push(0.25, EventKind::FwBlock { masked: false }).unwrap();
        log.push(6.95, EventKind::HardReset).unwrap();
        log.push(7.0, EventKind::Sel { current_sum: 1.2501 }).unwrap();
        log.push(7.0, EventKind::PowerOff).unwrap();
        log.push(9.0, EventKind::PowerOn).unwrap();
        log.push(11.1, EventKind::SoftReset).unwrap();
        log.push(12.0, EventKind::Break { fluence: 2.31e10 }).unwrap();
        log.push(
            640.0,
            EventKind::ScintCount {
                counts: 212_345,
                window: 40.0,
                area: 3.125,
            },
        )
        .unwrap();
        log
    }

    #[test]
    fn round_trip_including_infinite_phase() {
        let mut buf = Vec::new();
        write_events(&sample_log(), &header(), &mut buf).unwrap();
        let (h, log) = parse_events(buf.as_slice()).unwrap();
        assert_eq!(h, header());
        assert_eq!(log, sample_log());
        assert_eq!(h.timeline().segments().len(), 1);
    }

    #[test]
    fn unknown_kind_is_malformed() {
        let mut buf = Vec::new();
        write_events(&EventLog::new(), &header(), &mut buf).unwrap();
        buf.extend_from_slice(b"1.0,ack,\n");
        let err = parse_events(buf.as_slice()).unwrap_err();
        assert!(matches!(err, ParseError::Malformed { line: 15, .. }), "{err}");
    }

    #[test]
    fn out_of_order_events_rejected() {
        let mut buf = Vec::new();
        write_events(&EventLog::new(), &header(), &mut buf).unwrap();
        buf.extend_from_slice(b"5,hard_reset,\n4,hard_reset,\n");
        assert!(parse_events(buf.as_slice()).is_err());
    }
}
