//! Seedable campaign simulator.
//!
//! Phase boundaries and stochastic event times are exact; the control board
//! samples currents, the latch-up comparator and the heartbeat watchdog on a
//! fixed tick. Each stochastic process owns its own ChaCha stream, so a
//! change in one process (or in telemetry recording) never perturbs another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1, Normal, Poisson};
use thiserror::Error;

use crate::domain::{
    validate, BreakTrigger, CampaignConfig, DomainError, EventKind, EventLog, Health, Phase,
    TelemetryRecord, Violation, ADC_CHANNEL, CHANNEL_COUNT, HALL_CHANNEL,
};
use crate::physics::{FluxProfile, FluxSegment};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid campaign configuration: {}", join(.0))]
    Invalid(Vec<Violation>),
    #[error("internal simulator error: {0}")]
    Internal(String),
    #[error(transparent)]
    Log(#[from] DomainError),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    /// `Gpio` or `BeamMonitor`.
    pub phase: Phase,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Contiguous, non-overlapping segments covering `[0, total_duration)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTimeline {
    segments: Vec<Segment>,
}

impl PhaseTimeline {
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn end(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.end)
    }

    pub fn gpio_segments(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| s.phase == Phase::Gpio)
    }

    /// Total in-beam time.
    pub fn gpio_time(&self) -> f64 {
        self.gpio_segments().map(Segment::duration).sum()
    }

    pub fn phase_at(&self, t: f64) -> Phase {
        let i = self.segments.partition_point(|s| s.end <= t);
        self.segments.get(i).map_or(Phase::Off, |s| s.phase)
    }

    /// GPIO test windows: `cycle`-long windows starting at every in-beam
    /// segment start and repeating every `cycle + gap`.
    pub fn test_windows(&self, cycle: f64, gap: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for seg in self.gpio_segments() {
            let mut k = 0u32;
            loop {
                let start = seg.start + f64::from(k) * (cycle + gap);
                if start >= seg.end {
                    break;
                }
                out.push((start, (start + cycle).min(seg.end)));
                k += 1;
            }
        }
        out
    }

    /// Flux seen by the device: `beam_flux` in-beam plus `background` always.
    pub fn flux_profile(&self, beam_flux: f64, background: f64) -> FluxProfile {
        let segments = self
            .segments
            .iter()
            .map(|s| FluxSegment {
                start: s.start,
                end: s.end,
                flux: background + if s.phase == Phase::Gpio { beam_flux } else { 0.0 },
            })
            .collect();
        FluxProfile::new(segments).expect("timeline segments are contiguous from zero")
    }
}

/// Alternating in-beam / flux-monitor segments, truncated at the campaign end.
pub fn generate_phase_timeline(config: &CampaignConfig) -> Result<PhaseTimeline, SimError> {
    let violations = validate(config);
    if !violations.is_empty() {
        return Err(SimError::Invalid(violations));
    }
    Ok(timeline_for(config.phase_plan.gpio, config.phase_plan.beam_monitor, config.total_duration))
}

/// Timeline from raw plan durations; a zero `beam_monitor` gives one segment.
pub fn timeline_for(gpio: f64, beam_monitor: f64, total: f64) -> PhaseTimeline {
    let mut segments = Vec::new();
    if beam_monitor == 0.0 {
        segments.push(Segment {
            start: 0.0,
            end: total,
            phase: Phase::Gpio,
        });
        return PhaseTimeline { segments };
    }
    let mut t = 0.0;
    let mut phase = Phase::Gpio;
    while t < total {
        let len = if phase == Phase::Gpio { gpio } else { beam_monitor };
        let end = (t + len).min(total);
        segments.push(Segment { start: t, end, phase });
        t = end;
        phase = if phase == Phase::Gpio {
            Phase::BeamMonitor
        } else {
            Phase::Gpio
        };
    }
    PhaseTimeline { segments }
}

/// Homogeneous Poisson arrivals on `[t0, t1)`, sorted.
pub fn draw_event_times<R: Rng + ?Sized>(rate: f64, t0: f64, t1: f64, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::new();
    if rate.is_nan() || rate <= 0.0 || t1.partial_cmp(&t0) != Some(std::cmp::Ordering::Greater) {
        return out;
    }
    let gaps = Exp::new(rate).expect("positive rate");
    let mut t = t0;
    loop {
        t += gaps.sample(rng);
        if t >= t1 {
            return out;
        }
        out.push(t);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WatchdogAction {
    None,
    HardReset,
}

/// Hard reset once the heartbeat has been missing for strictly longer than
/// `timeout`.
pub fn watchdog_check(now: f64, last_heartbeat: f64, timeout: f64) -> WatchdogAction {
    if now - last_heartbeat > timeout {
        WatchdogAction::HardReset
    } else {
        WatchdogAction::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatchupAction {
    None,
    SelPowerOff,
}

/// Supply cut when the current sum (A) is strictly above the threshold.
pub fn latchup_check(current_sum: f64, threshold: f64) -> LatchupAction {
    if current_sum > threshold {
        LatchupAction::SelPowerOff
    } else {
        LatchupAction::None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DutState {
    pub health: Health,
    pub power_on: bool,
    pub last_heartbeat: f64,
    /// Total fluence including background, cm⁻².
    pub accumulated_fluence: f64,
    pub currents: Option<[f64; CHANNEL_COUNT]>,
}

/// Everything a campaign produces.
#[derive(Debug, Clone)]
pub struct CampaignRun {
    pub timeline: PhaseTimeline,
    pub telemetry: Vec<TelemetryRecord>,
    pub events: EventLog,
    pub final_state: DutState,
    /// Digest of the abstract EEPROM image before and after irradiation.
    pub eeprom_pre: String,
    pub eeprom_post: String,
}

/// Whether per-tick telemetry is kept. Event logs are identical either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recording {
    Full,
    EventsOnly,
}

pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignRun, SimError> {
    run_campaign_with(config, Recording::Full)
}

pub fn run_campaign_with(config: &CampaignConfig, recording: Recording) -> Result<CampaignRun, SimError> {
    let timeline = generate_phase_timeline(config)?;
    Engine::new(config, timeline, recording).run()
}

// Independent RNG streams, one per stochastic process.
mod stream {
    pub const FW_BLOCK: u64 = 0;
    pub const SEL: u64 = 1;
    pub const BREAK: u64 = 2;
    pub const SCINT: u64 = 3;
    pub const SPONTANEOUS: u64 = 4;
    pub const NOISE: u64 = 5;
    pub const EEPROM: u64 = 6;
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Exact {
    WindowStart,
    WindowEnd,
    FwUpset,
    SelOnset,
    Spontaneous,
    Break,
    Scint { counts: u64, window: f64, area: f64 },
}

impl Exact {
    // Tie-break order at identical times.
    fn rank(&self) -> u8 {
        match self {
            Exact::WindowEnd => 0,
            Exact::WindowStart => 1,
            Exact::Break => 2,
            Exact::Spontaneous => 3,
            Exact::SelOnset => 4,
            Exact::FwUpset => 5,
            Exact::Scint { .. } => 6,
        }
    }
}

struct Engine<'a> {
    cfg: &'a CampaignConfig,
    timeline: PhaseTimeline,
    profile: FluxProfile,
    recording: Recording,
    queue: Vec<(f64, Exact)>,
    noise_rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    events: EventLog,
    telemetry: Vec<TelemetryRecord>,

    health: Health,
    powered: bool,
    power_on_at: Option<(f64, usize)>,
    boot_until: Option<f64>,
    blocked: bool,
    in_window: bool,
    latched: bool,
    last_hb: f64,
    fluence: f64,
    flip_eeprom: bool,
    eeprom_flip_p: f64,
    break_rng: ChaCha8Rng,
    currents: Option<[f64; CHANNEL_COUNT]>,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a CampaignConfig, timeline: PhaseTimeline, recording: Recording) -> Self {
        let total = cfg.total_duration;
        let beam_flux = cfg.beam_flux();
        let profile = timeline.flux_profile(beam_flux, cfg.beam.background.value);
        let mut queue: Vec<(f64, Exact)> = Vec::new();

        for (s, e) in timeline.test_windows(cfg.gpio_cycle, cfg.gpio_gap) {
            queue.push((s, Exact::WindowStart));
            if e < total {
                queue.push((e, Exact::WindowEnd));
            }
        }

        let mut fw_rng = rng_for(cfg.seed, stream::FW_BLOCK);
        let mut sel_rng = rng_for(cfg.seed, stream::SEL);
        let fw_rate = cfg.fw_block_cross_section() * beam_flux;
        let sel_rate = cfg.sel_cross_section() * beam_flux;
        for seg in timeline.gpio_segments() {
            for t in draw_event_times(fw_rate, seg.start, seg.end, &mut fw_rng) {
                queue.push((t, Exact::FwUpset));
            }
            for t in draw_event_times(sel_rate, seg.start, seg.end, &mut sel_rng) {
                queue.push((t, Exact::SelOnset));
            }
        }

        if cfg.dut.initial_health == Health::Damaged {
            let mut rng = rng_for(cfg.seed, stream::SPONTANEOUS);
            for t in draw_event_times(cfg.dut.spontaneous_reset_rate, 0.0, total, &mut rng) {
                queue.push((t, Exact::Spontaneous));
            }
        }

        let mut break_rng = rng_for(cfg.seed, stream::BREAK);
        if cfg.dut.initial_health != Health::Broken {
            let at = match cfg.forced_break {
                Some(BreakTrigger::AtTime(t)) => Some(t),
                Some(BreakTrigger::AtFluence(f)) => profile.time_at(f),
                None if cfg.dut.break_hazard > 0.0 => {
                    let e: f64 = Exp1.sample(&mut break_rng);
                    profile.time_at(e / cfg.dut.break_hazard)
                }
                None => None,
            };
            if let Some(t) = at.filter(|&t| t <= total) {
                queue.push((t, Exact::Break));
            }
        }

        if cfg.beam_on {
            let mut rng = rng_for(cfg.seed, stream::SCINT);
            let area = cfg.beam.spot.area_cm2();
            let rate = (cfg.beam.nominal_flux + cfg.beam.background.value) * area;
            for seg in timeline.segments().iter().filter(|s| s.phase == Phase::BeamMonitor) {
                let mean = rate * seg.duration();
                let counts = if mean > 0.0 {
                    Poisson::new(mean).expect("positive mean").sample(&mut rng) as u64
                } else {
                    0
                };
                queue.push((
                    seg.end,
                    Exact::Scint {
                        counts,
                        window: seg.duration(),
                        area,
                    },
                ));
            }
        }

        queue.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.rank().cmp(&b.1.rank())));
        // Popped from the back.
        queue.reverse();

        let noise = (cfg.dut.current_noise > 0.0)
            .then(|| Normal::new(0.0, cfg.dut.current_noise).expect("finite noise"));

        Self {
            cfg,
            timeline,
            profile,
            recording,
            queue,
            noise_rng: rng_for(cfg.seed, stream::NOISE),
            noise,
            events: EventLog::new(),
            telemetry: Vec::new(),
            health: cfg.dut.initial_health,
            powered: true,
            power_on_at: None,
            boot_until: None,
            blocked: false,
            in_window: false,
            latched: false,
            last_hb: 0.0,
            fluence: 0.0,
            flip_eeprom: false,
            eeprom_flip_p: cfg.dut.eeprom_flip_on_break,
            break_rng,
            currents: None,
        }
    }

    fn alive(&self) -> bool {
        self.powered
            && self.boot_until.is_none()
            && !self.blocked
            && !(self.health == Health::Broken && self.in_window)
    }

    fn reboot(&mut self, t: f64) {
        self.blocked = false;
        self.boot_until = Some(t + self.cfg.reset_overhead);
        self.last_hb = t;
    }

    fn log(&mut self, t: f64, kind: EventKind) -> Result<(), SimError> {
        self.events.push(t, kind).map_err(SimError::from)
    }

    /// Handles every exact-time occurrence up to `limit` (inclusive), in
    /// time order. A pending power-on is due once `tick` reaches its index.
    fn drain_until(&mut self, limit: f64, tick: Option<usize>) -> Result<(), SimError> {
        loop {
            let power = self
                .power_on_at
                .filter(|&(_, k)| tick.is_none_or(|tk| k <= tk))
                .map(|(t, _)| t);
            let boot = self.boot_until.filter(|&t| t <= limit);
            let next = self.queue.last().map(|e| e.0).filter(|&t| t <= limit);

            // power-on, then boot completion, then queued occurrences
            let pick = [power.map(|t| (t, 0u8)), boot.map(|t| (t, 1)), next.map(|t| (t, 2))]
                .into_iter()
                .flatten()
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let Some((t, which)) = pick else {
                return Ok(());
            };
            match which {
                0 => {
                    self.power_on_at = None;
                    self.powered = true;
                    self.latched = false;
                    self.log(t, EventKind::PowerOn)?;
                    self.reboot(t);
                }
                1 => {
                    self.boot_until = None;
                    self.last_hb = t;
                }
                _ => {
                    let (t, ev) = self.queue.pop().expect("peeked");
                    self.apply(t, ev)?;
                }
            }
        }
    }

    fn apply(&mut self, t: f64, ev: Exact) -> Result<(), SimError> {
        let was_alive = self.alive();
        match ev {
            Exact::WindowStart => {
                self.in_window = true;
            }
            Exact::WindowEnd => {
                self.in_window = false;
                if !was_alive && self.alive() {
                    self.last_hb = t;
                }
            }
            Exact::FwUpset => {
                if self.powered {
                    let masked = self.blocked;
                    self.log(t, EventKind::FwBlock { masked })?;
                    self.blocked = true;
                }
            }
            Exact::SelOnset => {
                if self.powered {
                    self.latched = true;
                }
            }
            Exact::Spontaneous => {
                if self.powered && self.health == Health::Damaged {
                    self.log(t, EventKind::SoftReset)?;
                    self.reboot(t);
                }
            }
            Exact::Break => {
                if self.health != Health::Broken {
                    let fluence = self.profile.fluence_at(t);
                    self.log(t, EventKind::Break { fluence })?;
                    self.health = Health::Broken;
                    self.flip_eeprom = self.eeprom_flip_p > 0.0
                        && self.break_rng.random::<f64>() < self.eeprom_flip_p;
                }
            }
            Exact::Scint {
                counts,
                window,
                area,
            } => self.log(
                t,
                EventKind::ScintCount {
                    counts,
                    window,
                    area,
                },
            )?,
        }
        Ok(())
    }

    fn measure(&mut self) -> [f64; CHANNEL_COUNT] {
        let mut out = [0.0; CHANNEL_COUNT];
        for (i, ch) in self.cfg.dut.channels.iter().enumerate().take(CHANNEL_COUNT) {
            let mut v = ch.nominal;
            if i == ADC_CHANNEL && self.health == Health::Broken {
                v -= self.cfg.dut.broken_current_drop;
            }
            if i == HALL_CHANNEL && self.latched {
                v += self.cfg.dut.latch_current;
            }
            if let Some(n) = &self.noise {
                v += n.sample(&mut self.noise_rng);
            }
            // 1 µA ADC resolution
            out[i] = (v.max(0.0) * 1000.0).round() / 1000.0;
        }
        out
    }

    fn run(mut self) -> Result<CampaignRun, SimError> {
        let cfg = self.cfg;
        let total = cfg.total_duration;
        let tick = cfg.tick;
        let dead_ticks = (cfg.latchup_deadtime / tick).round() as usize;
        let mut eeprom_rng = rng_for(cfg.seed, stream::EEPROM);
        let eeprom_image: u64 = eeprom_rng.random();

        let mut prev_t = 0.0;
        let mut k = 0usize;
        loop {
            let t = k as f64 * tick;
            if t >= total {
                break;
            }
            self.drain_until(t, Some(k))?;
            self.fluence += self.profile.fluence_between(prev_t, t);
            prev_t = t;

            let phase = if cfg.beam_on {
                self.timeline.phase_at(t)
            } else {
                Phase::Off
            };

            if self.powered {
                let currents = self.measure();
                let sum = currents.iter().sum::<f64>() / 1000.0;
                if !sum.is_finite() {
                    return Err(SimError::Internal(format!("non-finite current sum at t={t}")));
                }
                self.currents = Some(currents);
                if latchup_check(sum, cfg.latchup_threshold) == LatchupAction::SelPowerOff {
                    self.log(t, EventKind::Sel { current_sum: sum })?;
                    self.log(t, EventKind::PowerOff)?;
                    self.powered = false;
                    self.latched = false;
                    self.blocked = false;
                    self.boot_until = None;
                    self.currents = None;
                    self.power_on_at = Some(((k + dead_ticks) as f64 * tick, k + dead_ticks));
                    if dead_ticks == 0 {
                        self.drain_until(t, Some(k))?;
                    }
                }
            }

            if self.powered {
                if self.alive() {
                    self.last_hb = t;
                } else if self.boot_until.is_none()
                    && watchdog_check(t, self.last_hb, cfg.watchdog_timeout)
                        == WatchdogAction::HardReset
                {
                    self.log(t, EventKind::HardReset)?;
                    self.reboot(t);
                }
            }

            if self.recording == Recording::Full {
                let rec = match (self.powered, self.currents) {
                    (true, Some(c)) => TelemetryRecord::powered(t, c, self.alive(), phase),
                    _ => TelemetryRecord::unpowered(t, phase),
                };
                self.telemetry.push(rec);
            }
            k += 1;
        }

        self.drain_until(total, None)?;
        self.fluence += self.profile.fluence_between(prev_t, total);
        if !self.fluence.is_finite() {
            return Err(SimError::Internal("non-finite fluence".into()));
        }

        let eeprom_pre = format!("{eeprom_image:016x}");
        let eeprom_post = if self.flip_eeprom {
            let bit = eeprom_rng.random_range(0..64);
            format!("{:016x}", eeprom_image ^ (1u64 << bit))
        } else {
            eeprom_pre.clone()
        };

        Ok(CampaignRun {
            final_state: DutState {
                health: self.health,
                power_on: self.powered,
                last_heartbeat: self.last_hb,
                accumulated_fluence: self.fluence,
                currents: if self.powered { self.currents } else { None },
            },
            timeline: self.timeline,
            telemetry: self.telemetry,
            events: self.events,
            eeprom_pre,
            eeprom_post,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BeamSpec, EventTag, PhasePlan};

    fn st01() -> CampaignConfig {
        let mut cfg = CampaignConfig::new(BeamSpec::kr84(1.01e7 / 6027.0), 6027.0);
        cfg.phase_plan = PhasePlan::single();
        cfg.dut.fw_block_cross_section.kr84 = 8.08e-5;
        cfg
    }

    #[test]
    fn timeline_alternates_and_truncates() {
        let mut cfg = CampaignConfig::new(BeamSpec::kr84(1e3), 1280.0);
        cfg.phase_plan = PhasePlan::default();
        let tl = generate_phase_timeline(&cfg).unwrap();
        let got: Vec<_> = tl.segments().iter().map(|s| (s.start, s.end, s.phase)).collect();
        assert_eq!(
            got,
            vec![
                (0.0, 600.0, Phase::Gpio),
                (600.0, 640.0, Phase::BeamMonitor),
                (640.0, 1240.0, Phase::Gpio),
                (1240.0, 1280.0, Phase::BeamMonitor),
            ]
        );
        assert_eq!(tl.gpio_time(), 1200.0);
    }

    #[test]
    fn single_segment_neutron_plan() {
        let mut cfg = CampaignConfig::new(BeamSpec::neutron(3.18e6), 62220.0);
        cfg.phase_plan = PhasePlan::single();
        let tl = generate_phase_timeline(&cfg).unwrap();
        assert_eq!(tl.segments().len(), 1);
        assert_eq!(tl.gpio_time(), 62220.0);
    }

    #[test]
    fn zero_duration_rejected() {
        let cfg = CampaignConfig::new(BeamSpec::kr84(1e3), 0.0);
        assert!(matches!(generate_phase_timeline(&cfg), Err(SimError::Invalid(_))));
    }

    #[test]
    fn test_windows_repeat_inside_gpio_segments() {
        let tl = timeline_for(600.0, 40.0, 1280.0);
        let w = tl.test_windows(40.0, 40.0);
        assert_eq!(w[0], (0.0, 40.0));
        assert_eq!(w[1], (80.0, 120.0));
        assert_eq!(w[7], (560.0, 600.0));
        assert_eq!(w[8], (640.0, 680.0));
        assert!(w.iter().all(|&(s, e)| tl.phase_at(s) == Phase::Gpio && e > s));
    }

    #[test]
    fn draw_event_times_basics() {
        let mut rng = rng_for(42, 0);
        assert!(draw_event_times(0.0, 0.0, 100.0, &mut rng).is_empty());
        assert!(draw_event_times(1.0, 5.0, 5.0, &mut rng).is_empty());
        let a = draw_event_times(0.5, 10.0, 200.0, &mut rng_for(42, 0));
        let b = draw_event_times(0.5, 10.0, 200.0, &mut rng_for(42, 0));
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
        assert!(a.iter().all(|&t| (10.0..200.0).contains(&t)));
    }

    #[test]
    fn comparators_are_strict() {
        assert_eq!(watchdog_check(10.0, 3.0, 6.7), WatchdogAction::HardReset);
        assert_eq!(watchdog_check(1.0, 0.5, 6.7), WatchdogAction::None);
        assert_eq!(watchdog_check(6.7, 0.0, 6.7), WatchdogAction::None);
        assert_eq!(latchup_check(1.05, 1.0), LatchupAction::SelPowerOff);
        assert_eq!(latchup_check(0.05, 1.0), LatchupAction::None);
        assert_eq!(latchup_check(1.0, 1.0), LatchupAction::None);
    }

    #[test]
    fn dark_run_is_quiet() {
        let mut cfg = CampaignConfig::new(BeamSpec::kr84(0.0), 1000.0);
        cfg.beam.background = crate::domain::Measured::new(0.0, 0.0);
        let run = run_campaign(&cfg).unwrap();
        for tag in [EventTag::FwBlock, EventTag::Sel, EventTag::Break, EventTag::HardReset] {
            assert_eq!(run.events.count(tag), 0, "{tag:?}");
        }
        assert!(run.telemetry.iter().all(|r| r.heartbeat_ok && r.power_on));
        assert_eq!(run.telemetry.len(), 10_000);
        for r in &run.telemetry {
            assert!((r.current_sum - 0.050).abs() < 0.002, "{}", r.current_sum);
        }
    }

    #[test]
    fn st01_fw_block_count_is_plausible() {
        let run = run_campaign_with(&st01(), Recording::EventsOnly).unwrap();
        let n = run.events.count(EventTag::FwBlock) as f64;
        // 5σ band around σφ = 816
        assert!((n - 816.0).abs() < 5.0 * 816f64.sqrt(), "{n}");
        assert_eq!(run.events.count(EventTag::Sel), 0);
        assert!(run.events.count(EventTag::HardReset) > 0);
    }

    #[test]
    fn recording_mode_does_not_change_events() {
        let cfg = st01();
        let a = run_campaign_with(&cfg, Recording::Full).unwrap();
        let b = run_campaign_with(&cfg, Recording::EventsOnly).unwrap();
        assert_eq!(a.events, b.events);
        assert!(b.telemetry.is_empty());
    }

    #[test]
    fn broken_chip_resets_every_seven_seconds_in_windows() {
        let mut cfg = CampaignConfig::new(BeamSpec::neutron(3e6), 2000.0);
        cfg.phase_plan = PhasePlan::single();
        cfg.forced_break = Some(BreakTrigger::AtTime(400.0));
        let run = run_campaign(&cfg).unwrap();
        assert_eq!(run.events.break_time(), Some(400.0));
        let resets = run.events.times(EventTag::HardReset);
        assert!(!resets.is_empty());
        assert!(resets.iter().all(|&t| t > 400.0));
        let gaps: Vec<f64> = resets.windows(2).map(|w| w[1] - w[0]).filter(|&g| g < 20.0).collect();
        assert!(!gaps.is_empty());
        for g in &gaps {
            assert!((g - 7.0).abs() <= 0.15, "interval {g}");
        }
        // bunch starts are one cycle + gap apart
        let starts: Vec<f64> = std::iter::once(resets[0])
            .chain(resets.windows(2).filter(|w| w[1] - w[0] > 20.0).map(|w| w[1]))
            .collect();
        for w in starts.windows(2) {
            assert!((w[1] - w[0] - 80.0).abs() < 0.5, "{:?}", w);
        }
        // ADC supply dropped by 1.5 mA after the break
        let before = run.telemetry.iter().find(|r| r.t == 100.0).unwrap();
        let after = run.telemetry.iter().find(|r| r.t == 1000.0).unwrap();
        let drop = before.adc_current().unwrap() - after.adc_current().unwrap();
        assert!((drop - 1.5).abs() < 0.6, "{drop}");
        assert_eq!(run.final_state.health, Health::Broken);
    }

    #[test]
    fn latchup_cuts_power_for_deadtime() {
        let mut cfg = CampaignConfig::new(BeamSpec::kr84(1e3), 600.0);
        cfg.dut.sel_cross_section.kr84 = 1e-5;
        let run = run_campaign(&cfg).unwrap();
        let sels = run.events.times(EventTag::Sel);
        assert!(!sels.is_empty());
        run.events.check_latchup_protocol(2.0, 1e-9).unwrap();
        for &t in &sels {
            let off = run
                .telemetry
                .iter()
                .filter(|r| r.t >= t - 1e-9 && r.t < t + 2.0 - 1e-9)
                .collect::<Vec<_>>();
            assert_eq!(off.len(), 20);
            assert!(off.iter().all(|r| !r.power_on && r.currents.is_none()));
        }
    }

    #[test]
    fn fluence_matches_flux_time_integral() {
        let mut cfg = CampaignConfig::new(BeamSpec::kr84(1.68e3), 1280.5);
        cfg.tick = 0.3;
        let run = run_campaign_with(&cfg, Recording::EventsOnly).unwrap();
        let expected = 1.68e3 * 1200.5 + 20.0 * 1280.5;
        let got = run.final_state.accumulated_fluence;
        assert!(((got - expected) / expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn scintillator_windows_logged() {
        let cfg = CampaignConfig::new(BeamSpec::kr84(1.68e3), 1280.0);
        let run = run_campaign_with(&cfg, Recording::EventsOnly).unwrap();
        let scint: Vec<_> = run
            .events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::ScintCount { counts, window, area } => Some((e.t, counts, window, area)),
                _ => None,
            })
            .collect();
        assert_eq!(scint.len(), 2);
        assert_eq!(scint[0].0, 640.0);
        let mean = 1700.0 * std::f64::consts::PI * 40.0;
        assert!((scint[0].1 as f64 - mean).abs() < 5.0 * mean.sqrt());
    }

    #[test]
    fn damaged_chip_soft_resets_without_beam() {
        let mut cfg = CampaignConfig::new(BeamSpec::neutron(0.0), 7200.0);
        cfg.beam_on = false;
        cfg.phase_plan = PhasePlan::single();
        cfg.dut.initial_health = Health::Damaged;
        cfg.dut.spontaneous_reset_rate = 8.0 / 7200.0;
        let run = run_campaign(&cfg).unwrap();
        assert!(run.events.count(EventTag::SoftReset) > 0);
        assert!(run.telemetry.iter().all(|r| r.phase == Phase::Off));
        assert_eq!(run.events.count(EventTag::FwBlock), 0);
    }

    #[test]
    fn eeprom_flip_on_break() {
        let mut cfg = CampaignConfig::new(BeamSpec::neutron(3e6), 200.0);
        cfg.phase_plan = PhasePlan::single();
        cfg.forced_break = Some(BreakTrigger::AtTime(50.0));
        let clean = run_campaign_with(&cfg, Recording::EventsOnly).unwrap();
        assert_eq!(clean.eeprom_pre, clean.eeprom_post);
        cfg.dut.eeprom_flip_on_break = 1.0;
        let flipped = run_campaign_with(&cfg, Recording::EventsOnly).unwrap();
        assert_ne!(flipped.eeprom_pre, flipped.eeprom_post);
    }
}
