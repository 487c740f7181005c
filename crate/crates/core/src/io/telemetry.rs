//! Line-oriented telemetry files.
//!
//! ```text
//! # seebench telemetry
//! # format_version=1
//! # campaign=ST01
//! # config_digest=9f2c…
//! # tick=0.1
//! # start=2021-04-27T09:00:00Z
//! t,6/I_IO,16/I_REG_0,…,EXTERNAL/I_Hall,sum_a,phase,heartbeat,power
//! 0,0.503,7.991,…,4.512,0.0500,gpio,1,1
//! ```
//!
//! Currents are written in mA with three decimals and left empty while the
//! supply is off; the sum is in A with four decimals.

use std::io::{BufRead, Write};

use crate::domain::{monitored_channels, Phase, TelemetryRecord, CHANNEL_COUNT};

use super::{header_value, parse_header_lines, IoError, ParseError, FORMAT_VERSION};

const MAGIC: &str = "# seebench telemetry";

#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryHeader {
    pub format_version: u32,
    pub campaign: String,
    pub config_digest: String,
    /// Channel keys in control-board order.
    pub channels: Vec<String>,
    pub tick: f64,
    /// ISO-8601 start of acquisition.
    pub start: String,
}

impl TelemetryHeader {
    pub fn new(campaign: &str, config_digest: &str, tick: f64, start: &str) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            campaign: campaign.to_string(),
            config_digest: config_digest.to_string(),
            channels: monitored_channels().iter().map(|c| c.key()).collect(),
            tick,
            start: start.to_string(),
        }
    }

    fn column_line(&self) -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend(self.channels.iter().cloned());
        cols.extend(["sum_a", "phase", "heartbeat", "power"].map(String::from));
        cols.join(",")
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn format_record(r: &TelemetryRecord, out: &mut String) {
    use std::fmt::Write as _;
    let _ = write!(out, "{}", r.t);
    match &r.currents {
        Some(c) => c.iter().for_each(|x| {
            let _ = write!(out, ",{x:.3}");
        }),
        None => (0..CHANNEL_COUNT).for_each(|_| out.push(',')),
    }
    let _ = writeln!(
        out,
        ",{:.4},{},{},{}",
        r.current_sum,
        r.phase.as_str(),
        flag(r.heartbeat_ok),
        flag(r.power_on)
    );
}

/// Writes the header and one line per record, returning the byte count.
pub fn write_telemetry<W: Write>(
    records: &[TelemetryRecord],
    header: &TelemetryHeader,
    mut sink: W,
) -> Result<u64, IoError> {
    if let Some(i) = records.windows(2).position(|w| w[1].t < w[0].t) {
        return Err(IoError::NotOrdered { index: i + 1 });
    }
    for (key, v) in [("campaign", &header.campaign), ("start", &header.start)] {
        if v.contains(['\n', '\r']) {
            return Err(IoError::BadHeader(format!("{key} contains a line break")));
        }
    }
    let mut written = 0u64;
    let mut emit = |text: &str, sink: &mut W| -> Result<(), IoError> {
        sink.write_all(text.as_bytes())
            .map_err(|source| IoError::Sink { written, source })?;
        written += text.len() as u64;
        Ok(())
    };

    let head = format!(
        "{MAGIC}\n# format_version={}\n# campaign={}\n# config_digest={}\n# tick={}\n# start={}\n{}\n",
        header.format_version,
        header.campaign,
        header.config_digest,
        header.tick,
        header.start,
        header.column_line()
    );
    emit(&head, &mut sink)?;
    let mut line = String::with_capacity(160);
    for r in records {
        line.clear();
        format_record(r, &mut line);
        emit(&line, &mut sink)?;
    }
    sink.flush().map_err(|source| IoError::Sink { written, source })?;
    Ok(written)
}

fn parse_flag(s: &str, what: &str, line: usize) -> Result<bool, ParseError> {
    match s {
        "1" => Ok(true),
        "0" => Ok(false),
        _ => Err(ParseError::malformed(line, format!("{what} flag `{s}` is not 0 or 1"))),
    }
}

fn parse_f64(s: &str, what: &str, line: usize) -> Result<f64, ParseError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| ParseError::malformed(line, format!("{what} `{s}` is not a number")))
}

fn parse_record(text: &str, line: usize) -> Result<TelemetryRecord, ParseError> {
    let fields: Vec<&str> = text.split(',').collect();
    let expected = CHANNEL_COUNT + 5;
    if fields.len() != expected {
        let found = fields.len().saturating_sub(5);
        return Err(ParseError::ChannelCount { line, found });
    }
    let t = parse_f64(fields[0], "time", line)?;
    let current_fields = &fields[1..=CHANNEL_COUNT];
    let sum_field = parse_f64(fields[CHANNEL_COUNT + 1], "current sum", line)?;
    let phase: Phase = fields[CHANNEL_COUNT + 2]
        .parse()
        .map_err(|e: String| ParseError::malformed(line, e))?;
    let heartbeat_ok = parse_flag(fields[CHANNEL_COUNT + 3], "heartbeat", line)?;
    let power_on = parse_flag(fields[CHANNEL_COUNT + 4], "power", line)?;

    if current_fields.iter().all(|f| f.is_empty()) {
        if power_on {
            return Err(ParseError::malformed(line, "powered record without currents"));
        }
        return Ok(TelemetryRecord {
            heartbeat_ok,
            current_sum: sum_field,
            ..TelemetryRecord::unpowered(t, phase)
        });
    }
    let mut currents = [0.0; CHANNEL_COUNT];
    for (slot, f) in currents.iter_mut().zip(current_fields) {
        *slot = parse_f64(f, "current", line)?;
    }
    let record = TelemetryRecord {
        power_on,
        ..TelemetryRecord::powered(t, currents, heartbeat_ok, phase)
    };
    // The sum column is redundant; it must agree with the channels at the
    // written precision.
    if (record.current_sum - sum_field).abs() > 0.5e-4 + 1e-9 {
        return Err(ParseError::malformed(
            line,
            format!(
                "sum {sum_field} A disagrees with channel total {:.4} A",
                record.current_sum
            ),
        ));
    }
    Ok(record)
}

/// Reads a telemetry file written by [`write_telemetry`].
pub fn parse_telemetry<R: BufRead>(source: R) -> Result<(TelemetryHeader, Vec<TelemetryRecord>), ParseError> {
    let mut lines = source.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (pairs, column_line) = parse_header_lines(&mut lines, MAGIC)?;

    let header = TelemetryHeader {
        format_version: super::check_version(&pairs)?,
        campaign: header_value(&pairs, "campaign")?.to_string(),
        config_digest: header_value(&pairs, "config_digest")?.to_string(),
        tick: header_value(&pairs, "tick")?
            .parse()
            .map_err(|_| ParseError::BadHeader("tick is not a number".into()))?,
        start: header_value(&pairs, "start")?.to_string(),
        channels: Vec::new(),
    };
    let (n, cols) = column_line;
    let cols: Vec<&str> = cols.split(',').collect();
    if cols.len() != CHANNEL_COUNT + 5 || cols[0] != "t" {
        return Err(ParseError::ChannelCount {
            line: n,
            found: cols.len().saturating_sub(5),
        });
    }
    let header = TelemetryHeader {
        channels: cols[1..=CHANNEL_COUNT].iter().map(|s| s.to_string()).collect(),
        ..header
    };

    let mut records = Vec::new();
    for (n, line) in lines {
        let line = line.map_err(|e| ParseError::Read(e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let rec = parse_record(&line, n)?;
        if records.last().is_some_and(|p: &TelemetryRecord| rec.t < p.t) {
            return Err(ParseError::malformed(n, "record earlier than the previous one"));
        }
        records.push(rec);
    }
    Ok((header, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> TelemetryHeader {
        TelemetryHeader::new("ST01", "abc123", 0.1, "2021-03-01T08:00:00Z")
    }

    fn baseline() -> [f64; CHANNEL_COUNT] {
        let mut c = [0.0; CHANNEL_COUNT];
        for (slot, ch) in c.iter_mut().zip(monitored_channels()) {
            *slot = ch.nominal;
        }
        c
    }

    fn to_string(records: &[TelemetryRecord]) -> String {
        let mut buf = Vec::new();
        let n = write_telemetry(records, &header(), &mut buf).unwrap();
        assert_eq!(n as usize, buf.len());
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_is_header_only() {
        let text = to_string(&[]);
        assert!(text.lines().all(|l| l.starts_with('#') || l.starts_with("t,")));
        let (h, r) = parse_telemetry(text.as_bytes()).unwrap();
        assert_eq!(h, header());
        assert!(r.is_empty());
    }

    #[test]
    fn baseline_record_sums_to_fifty_milliamps() {
        let rec = TelemetryRecord::powered(0.0, baseline(), true, Phase::Gpio);
        let text = to_string(std::slice::from_ref(&rec));
        let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#') && !l.starts_with("t,")).collect();
        assert_eq!(data.len(), 1);
        assert_eq!(data[0].split(',').nth(CHANNEL_COUNT + 1), Some("0.0500"));
    }

    #[test]
    fn round_trip() {
        let records = vec![
            TelemetryRecord::powered(0.0, baseline(), true, Phase::Gpio),
            TelemetryRecord::unpowered(0.1, Phase::Gpio),
            TelemetryRecord::powered(0.2, baseline(), false, Phase::BeamMonitor),
            TelemetryRecord::unpowered(0.30000000000000004, Phase::Off),
        ];
        let (_, back) = parse_telemetry(to_string(&records).as_bytes()).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn identical_input_gives_identical_bytes() {
        let records = vec![TelemetryRecord::powered(0.0, baseline(), true, Phase::Gpio)];
        assert_eq!(to_string(&records), to_string(&records));
    }

    #[test]
    fn thirteen_currents_rejected() {
        let text = to_string(&[]) + "0,1,1,1,1,1,1,1,1,1,1,1,1,1,0.0130,gpio,1,1\n";
        let err = parse_telemetry(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("expected 14 channels"), "{err}");
        assert!(matches!(err, ParseError::ChannelCount { line: 8, found: 13 }));
    }

    #[test]
    fn version_two_rejected() {
        let text = to_string(&[]).replace("format_version=1", "format_version=2");
        assert!(matches!(
            parse_telemetry(text.as_bytes()),
            Err(ParseError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn malformed_line_names_its_number() {
        let rec = TelemetryRecord::powered(0.0, baseline(), true, Phase::Gpio);
        let text = to_string(&[rec]).replace(",gpio,", ",beam_on,");
        match parse_telemetry(text.as_bytes()) {
            Err(ParseError::Malformed { line, .. }) => assert_eq!(line, 8),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inconsistent_sum_rejected() {
        let rec = TelemetryRecord::powered(0.0, baseline(), true, Phase::Gpio);
        let text = to_string(&[rec]).replace(",0.0500,", ",0.0600,");
        assert!(parse_telemetry(text.as_bytes()).is_err());
    }

    #[test]
    fn unordered_records_refused_on_write() {
        let records = [
            TelemetryRecord::unpowered(1.0, Phase::Gpio),
            TelemetryRecord::unpowered(0.5, Phase::Gpio),
        ];
        assert!(matches!(
            write_telemetry(&records, &header(), Vec::new()),
            Err(IoError::NotOrdered { index: 1 })
        ));
    }

    struct FailAfter(usize);

    impl Write for FailAfter {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            if self.0 < buf.len() {
                return Err(std::io::Error::other("disk full"));
            }
            self.0 -= buf.len();
            Ok(buf.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn sink_failure_reports_position() {
        let records = vec![TelemetryRecord::powered(0.0, baseline(), true, Phase::Gpio); 3];
        let head_len = to_string(&[]).len();
        match write_telemetry(&records, &header(), FailAfter(head_len + 10)) {
            Err(IoError::Sink { written, .. }) => assert_eq!(written as usize, head_len),
            other => panic!("{other:?}"),
        }
    }
}
