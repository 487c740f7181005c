//! Chip-health classification from reset logs, and the pass/fail judgment of
//! an irradiated sample.
//!
//! A broken chip resets continuously, once per watchdog cycle, inside every
//! GPIO test window until the end of the log. A damaged chip still resets
//! during a radiation-less test but without that pattern.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{EventLog, Health, Measured};
use crate::physics::FluxProfile;
use crate::simulator::PhaseTimeline;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("reset times not sorted at index {0}")]
    Unsorted(usize),
    #[error("invalid run parameters: {0}")]
    BadParams(String),
    #[error("break time {t} s outside campaign [0, {end}] s")]
    OutsideCampaign { t: f64, end: f64 },
}

/// Maximal sequence of resets at a steady period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResetRun {
    pub start: f64,
    pub end: f64,
    pub count: usize,
    pub mean_interval: f64,
    pub interval_stddev: f64,
}

impl ResetRun {
    fn from_slice(times: &[f64]) -> Self {
        let intervals: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        let n = intervals.len() as f64;
        let mean = intervals.iter().sum::<f64>() / n;
        let var = intervals.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        Self {
            start: times[0],
            end: *times.last().expect("run has >= 2 resets"),
            count: times.len(),
            mean_interval: mean,
            interval_stddev: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub period: f64,
    pub tolerance: f64,
    pub min_count: usize,
}

impl Default for RunParams {
    fn default() -> Self {
        Self {
            period: 7.0,
            tolerance: 1.0,
            min_count: 5,
        }
    }
}

impl RunParams {
    fn check(&self) -> Result<(), ClassifyError> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(ClassifyError::BadParams(format!("period {} must be > 0", self.period)));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(ClassifyError::BadParams(format!(
                "tolerance {} must be >= 0",
                self.tolerance
            )));
        }
        if self.min_count < 2 {
            return Err(ClassifyError::BadParams(format!(
                "min_count {} must be >= 2",
                self.min_count
            )));
        }
        Ok(())
    }

    fn steady(&self, interval: f64) -> bool {
        (interval - self.period).abs() <= self.tolerance
    }
}

/// Maximal runs of consecutive resets whose every interval lies within
/// `period ± tolerance`, keeping those with at least `min_count` resets.
pub fn detect_reset_runs(
    reset_times: &[f64],
    period: f64,
    tolerance: f64,
    min_count: usize,
) -> Result<Vec<ResetRun>, ClassifyError> {
    let params = RunParams {
        period,
        tolerance,
        min_count,
    };
    params.check()?;
    if let Some(i) = reset_times.windows(2).position(|w| w[1] < w[0]) {
        return Err(ClassifyError::Unsorted(i + 1));
    }
    let mut runs = Vec::new();
    let mut first = 0;
    for i in 1..=reset_times.len() {
        let continues = i < reset_times.len() && params.steady(reset_times[i] - reset_times[i - 1]);
        if !continues {
            if i - first >= min_count {
                runs.push(ResetRun::from_slice(&reset_times[first..i]));
            }
            first = i;
        }
    }
    Ok(runs)
}

/// Resets observed in one test context, with the GPIO test windows that
/// were active and the time span the log covers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResetLog {
    pub resets: Vec<f64>,
    /// Windows where the continuous pattern can show. Empty means the whole
    /// span counts as one window.
    pub windows: Vec<(f64, f64)>,
    pub span: (f64, f64),
}

impl ResetLog {
    pub fn new(resets: Vec<f64>, windows: Vec<(f64, f64)>, span: (f64, f64)) -> Self {
        Self {
            resets,
            windows,
            span,
        }
    }

    /// Hard and soft resets of a simulated or parsed campaign.
    pub fn from_events(events: &EventLog, timeline: &PhaseTimeline, cycle: f64, gap: f64) -> Self {
        Self {
            resets: events.reset_times(),
            windows: timeline.test_windows(cycle, gap),
            span: (0.0, timeline.end()),
        }
    }

    fn effective_windows(&self) -> Vec<(f64, f64)> {
        if self.windows.is_empty() {
            vec![self.span]
        } else {
            self.windows.clone()
        }
    }
}

/// Per-log evidence used by [`chip_status`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogAnalysis {
    pub resets: usize,
    /// Qualifying runs found inside test windows.
    pub runs: Vec<ResetRun>,
    /// The last two eligible windows both hold a qualifying run.
    pub persistent: bool,
    /// Estimated onset of the persistent pattern.
    pub onset: Option<f64>,
}

pub fn analyze_log(log: &ResetLog, params: &RunParams) -> Result<LogAnalysis, ClassifyError> {
    params.check()?;
    if let Some(i) = log.resets.windows(2).position(|w| w[1] < w[0]) {
        return Err(ClassifyError::Unsorted(i + 1));
    }
    let windows = log.effective_windows();
    let in_window = |t: f64| windows.iter().any(|&(s, e)| s <= t && t < e);
    let windowed: Vec<f64> = log.resets.iter().copied().filter(|&t| in_window(t)).collect();
    let runs = detect_reset_runs(&windowed, params.period, params.tolerance, params.min_count)?;

    // Only windows long enough that a broken chip must fill them with a
    // qualifying run can show persistence.
    let min_len = params.min_count as f64 * (params.period + params.tolerance);
    let eligible: Vec<usize> = (0..windows.len())
        .filter(|&i| windows[i].1 - windows[i].0 >= min_len.min(log.span.1 - log.span.0) - 1e-9)
        .collect();
    let run_in = |w: (f64, f64)| runs.iter().find(|r| w.0 <= r.start && r.start < w.1);

    let tail = &eligible[eligible.len().saturating_sub(2)..];
    let persistent = !tail.is_empty() && tail.iter().all(|&i| run_in(windows[i]).is_some());

    let onset = if persistent {
        // earliest window from which every eligible window holds a run
        let mut j = *tail.last().expect("non-empty");
        for &i in eligible.iter().rev() {
            if run_in(windows[i]).is_some() {
                j = i;
            } else {
                break;
            }
        }
        let run = run_in(windows[j]).expect("window holds a run");
        Some(onset_before(&log.resets, &windows, j, run, params).max(log.span.0))
    } else {
        None
    };

    Ok(LogAnalysis {
        resets: log.resets.len(),
        runs,
        persistent,
        onset,
    })
}

// The first reset of a broken chip comes about one period after it stops
// answering; a run starting late in its window began inside that window.
// Otherwise look for a truncated run at the end of the previous window.
fn onset_before(
    resets: &[f64],
    windows: &[(f64, f64)],
    j: usize,
    run: &ResetRun,
    params: &RunParams,
) -> f64 {
    let (start, _) = windows[j];
    if run.start - start > params.period + params.tolerance || j == 0 {
        return run.start - params.period;
    }
    let (ps, pe) = windows[j - 1];
    let prev: Vec<f64> = resets.iter().copied().filter(|&t| ps <= t && t < pe).collect();
    match prev.last() {
        Some(&last) if pe - last <= params.period + params.tolerance => {
            let mut first = prev.len() - 1;
            while first > 0 && params.steady(prev[first] - prev[first - 1]) {
                first -= 1;
            }
            prev[first] - params.period
        }
        _ => pe,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub irradiation_resets: usize,
    pub radiationless_resets: Option<usize>,
    pub runs: Vec<ResetRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthVerdict {
    pub status: Health,
    pub evidence: Evidence,
    pub break_time: Option<f64>,
}

/// Classifies a chip from its irradiation log and, when available, a later
/// radiation-less log. The latest context decides: a persistent continuous
/// pattern there means broken; radiation-less resets without it mean
/// damaged. If the pattern only appears after irradiation, the break is
/// placed at the end of the irradiation log.
pub fn chip_status(
    irradiation: &ResetLog,
    radiationless: Option<&ResetLog>,
    params: &RunParams,
) -> Result<HealthVerdict, ClassifyError> {
    let irr = analyze_log(irradiation, params)?;
    let rl = radiationless.map(|l| analyze_log(l, params)).transpose()?;

    let (status, break_time, runs) = match &rl {
        None if irr.persistent => (Health::Broken, irr.onset, irr.runs.clone()),
        None => (Health::Fine, None, irr.runs.clone()),
        Some(a) if a.persistent => {
            let t = if irr.persistent {
                irr.onset
            } else {
                Some(irradiation.span.1)
            };
            (Health::Broken, t, a.runs.clone())
        }
        Some(a) if a.resets > 0 => (Health::Damaged, None, a.runs.clone()),
        Some(a) => (Health::Fine, None, a.runs.clone()),
    };
    Ok(HealthVerdict {
        status,
        evidence: Evidence {
            irradiation_resets: irr.resets,
            radiationless_resets: rl.map(|a| a.resets),
            runs,
        },
        break_time,
    })
}

/// Passed when the absorbed current agrees within the combined tolerance
/// and the EEPROM image is unchanged.
pub fn test_passed(pre_current: Measured, post_current: Measured, eeprom_pre: &str, eeprom_post: &str) -> bool {
    let tolerance = pre_current.uncertainty.abs() + post_current.uncertainty.abs();
    (post_current.value - pre_current.value).abs() <= tolerance && eeprom_pre == eeprom_post
}

/// In-beam fluence accrued before `break_time`.
pub fn estimate_break_fluence(break_time: f64, flux_profile: &FluxProfile) -> Result<f64, ClassifyError> {
    let end = flux_profile.end();
    if !(0.0..=end).contains(&break_time) {
        return Err(ClassifyError::OutsideCampaign { t: break_time, end });
    }
    Ok(flux_profile.fluence_at(break_time))
}
