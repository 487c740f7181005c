//! Shared data model: beams, device profiles, campaign configuration,
//! telemetry records and the discrete event log.
//!
//! Everything here is plain data. Values are immutable once built and can be
//! shared freely between threads.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of supply channels monitored by the control board.
pub const CHANNEL_COUNT: usize = 14;

/// Index of the integrated ADC supply (pin 58) in the channel order.
pub const ADC_CHANNEL: usize = 6;

/// Index of the whole-current Hall monitor in the channel order.
pub const HALL_CHANNEL: usize = 13;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("event at t={t} s inserted after t={last} s")]
    OutOfOrder { t: f64, last: f64 },
    #[error("second Break event at t={t} s; a campaign breaks at most once")]
    DuplicateBreak { t: f64 },
    #[error("unit mismatch: cannot {op} {lhs} and {rhs}")]
    UnitMismatch {
        op: &'static str,
        lhs: Unit,
        rhs: Unit,
    },
    #[error("unknown unit `{0}`")]
    UnknownUnit(String),
    #[error("uncertainty must be finite and >= 0, got {0}")]
    BadUncertainty(f64),
    #[error("non-finite value {0}")]
    NonFinite(f64),
}

// ---------------------------------------------------------------------------
// Quantities
// ---------------------------------------------------------------------------

/// Closed set of units carried by [`Quantity`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    /// Fluence, particles per cm².
    PerCm2,
    Seconds,
    Gray,
    /// Cross-section area.
    Cm2,
    PerSecond,
    /// Particle flux, particles per cm² per second.
    Flux,
    MilliAmp,
    Amp,
    Count,
}

impl Unit {
    pub fn symbol(self) -> &'static str {
        match self {
            Unit::PerCm2 => "cm^-2",
            Unit::Seconds => "s",
            Unit::Gray => "Gy",
            Unit::Cm2 => "cm^2",
            Unit::PerSecond => "s^-1",
            Unit::Flux => "cm^-2 s^-1",
            Unit::MilliAmp => "mA",
            Unit::Amp => "A",
            Unit::Count => "count",
        }
    }

    // (cm exponent, s exponent) for the kinematic units.
    fn dims(self) -> Option<(i8, i8)> {
        match self {
            Unit::PerCm2 => Some((-2, 0)),
            Unit::Seconds => Some((0, 1)),
            Unit::Cm2 => Some((2, 0)),
            Unit::PerSecond => Some((0, -1)),
            Unit::Flux => Some((-2, -1)),
            Unit::Count => Some((0, 0)),
            Unit::Gray | Unit::MilliAmp | Unit::Amp => None,
        }
    }

    fn from_dims(dims: (i8, i8)) -> Option<Unit> {
        [
            Unit::PerCm2,
            Unit::Seconds,
            Unit::Cm2,
            Unit::PerSecond,
            Unit::Flux,
            Unit::Count,
        ]
        .into_iter()
        .find(|u| u.dims() == Some(dims))
    }

    fn combine(self, other: Unit, sign: i8, op: &'static str) -> Result<Unit, DomainError> {
        let mismatch = DomainError::UnitMismatch {
            op,
            lhs: self,
            rhs: other,
        };
        match (self.dims(), other.dims()) {
            (Some(a), Some(b)) => {
                Unit::from_dims((a.0 + sign * b.0, a.1 + sign * b.1)).ok_or(mismatch)
            }
            // Dimensionless counts scale any unit.
            (None, Some((0, 0))) => Ok(self),
            (Some((0, 0)), None) if sign > 0 => Ok(other),
            _ => Err(mismatch),
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Unit {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "cm^-2" | "cm⁻²" => Unit::PerCm2,
            "s" => Unit::Seconds,
            "Gy" => Unit::Gray,
            "cm^2" | "cm²" => Unit::Cm2,
            "s^-1" | "s⁻¹" => Unit::PerSecond,
            "cm^-2 s^-1" | "cm⁻²·s⁻¹" => Unit::Flux,
            "mA" => Unit::MilliAmp,
            "A" => Unit::Amp,
            "count" => Unit::Count,
            other => return Err(DomainError::UnknownUnit(other.to_string())),
        })
    }
}

/// A value with a non-negative absolute uncertainty and a unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    value: f64,
    uncertainty: f64,
    unit: Unit,
}

impl Quantity {
    pub fn new(value: f64, uncertainty: f64, unit: Unit) -> Result<Self, DomainError> {
        if !value.is_finite() {
            return Err(DomainError::NonFinite(value));
        }
        if !(uncertainty.is_finite() && uncertainty >= 0.0) {
            return Err(DomainError::BadUncertainty(uncertainty));
        }
        Ok(Self {
            value,
            uncertainty,
            unit,
        })
    }

    /// Builds a quantity from a unit symbol, rejecting anything outside the
    /// closed unit set.
    pub fn parse_unit(value: f64, uncertainty: f64, unit: &str) -> Result<Self, DomainError> {
        Self::new(value, uncertainty, unit.parse()?)
    }

    pub fn exact(value: f64, unit: Unit) -> Result<Self, DomainError> {
        Self::new(value, 0.0, unit)
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn uncertainty(&self) -> f64 {
        self.uncertainty
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    /// Returns the value after checking the unit.
    pub fn value_in(&self, unit: Unit) -> Result<f64, DomainError> {
        if self.unit == unit {
            Ok(self.value)
        } else {
            Err(DomainError::UnitMismatch {
                op: "read",
                lhs: self.unit,
                rhs: unit,
            })
        }
    }

    pub fn add(&self, other: &Quantity) -> Result<Quantity, DomainError> {
        self.same_unit(other, "add")?;
        Quantity::new(
            self.value + other.value,
            self.uncertainty.hypot(other.uncertainty),
            self.unit,
        )
    }

    pub fn sub(&self, other: &Quantity) -> Result<Quantity, DomainError> {
        self.same_unit(other, "subtract")?;
        Quantity::new(
            self.value - other.value,
            self.uncertainty.hypot(other.uncertainty),
            self.unit,
        )
    }

    /// Product with first-order (relative, quadrature) error propagation.
    pub fn mul(&self, other: &Quantity) -> Result<Quantity, DomainError> {
        let unit = self.unit.combine(other.unit, 1, "multiply")?;
        let value = self.value * other.value;
        let unc = (self.uncertainty * other.value).hypot(other.uncertainty * self.value);
        Quantity::new(value, unc, unit)
    }

    pub fn div(&self, other: &Quantity) -> Result<Quantity, DomainError> {
        let unit = self.unit.combine(other.unit, -1, "divide")?;
        let value = self.value / other.value;
        let unc =
            (self.uncertainty / other.value).hypot(self.value * other.uncertainty / other.value.powi(2));
        Quantity::new(value, unc, unit)
    }

    /// Multiplies value and uncertainty by an exact dimensionless factor.
    pub fn scale(&self, factor: f64) -> Result<Quantity, DomainError> {
        Quantity::new(self.value * factor, self.uncertainty * factor.abs(), self.unit)
    }

    fn same_unit(&self, other: &Quantity, op: &'static str) -> Result<(), DomainError> {
        if self.unit == other.unit {
            Ok(())
        } else {
            Err(DomainError::UnitMismatch {
                op,
                lhs: self.unit,
                rhs: other.unit,
            })
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:e} ± {:e}) {}", self.value, self.uncertainty, self.unit)
    }
}

/// Unit-less value with a tolerance, as written in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Measured {
    pub value: f64,
    pub uncertainty: f64,
}

impl Measured {
    pub const fn new(value: f64, uncertainty: f64) -> Self {
        Self { value, uncertainty }
    }

    pub fn with_unit(&self, unit: Unit) -> Result<Quantity, DomainError> {
        Quantity::new(self.value, self.uncertainty, unit)
    }
}

// ---------------------------------------------------------------------------
// Beam
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Species {
    Kr84,
    Kr78,
    AtmosphericNeutron,
}

impl Species {
    pub fn is_ion(self) -> bool {
        !matches!(self, Species::AtmosphericNeutron)
    }
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Species::Kr84 => "84Kr",
            Species::Kr78 => "78Kr",
            Species::AtmosphericNeutron => "neutron",
        })
    }
}

/// Beam footprint at the device plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpotGeometry {
    Circle { diameter_mm: f64 },
    Square { side_mm: f64 },
}

impl SpotGeometry {
    pub fn area_cm2(&self) -> f64 {
        match *self {
            SpotGeometry::Circle { diameter_mm } => {
                let r_cm = diameter_mm / 20.0;
                std::f64::consts::PI * r_cm * r_cm
            }
            SpotGeometry::Square { side_mm } => (side_mm / 10.0).powi(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSpec {
    pub species: Species,
    /// Kinetic energy, MeV.
    pub energy: f64,
    /// Linear energy transfer, MeV·cm²·mg⁻¹. Zero for neutrons.
    #[serde(rename = "let")]
    pub let_: f64,
    /// Particles·cm⁻²·s⁻¹ delivered to the device while it sits in the beam.
    pub nominal_flux: f64,
    /// Natural-radioactivity background, particles·cm⁻²·s⁻¹.
    pub background: Measured,
    pub spot: SpotGeometry,
}

impl BeamSpec {
    /// 84Kr at 1678.24 MeV, LET 45, 20 mm circular spot.
    pub fn kr84(nominal_flux: f64) -> Self {
        Self {
            species: Species::Kr84,
            energy: 1678.24,
            let_: 45.0,
            nominal_flux,
            background: Measured::new(20.0, 5.0),
            spot: SpotGeometry::Circle { diameter_mm: 20.0 },
        }
    }

    /// 78Kr at 780 MeV, LET 34, 20 mm circular spot.
    pub fn kr78(nominal_flux: f64) -> Self {
        Self {
            species: Species::Kr78,
            energy: 780.0,
            let_: 34.0,
            ..Self::kr84(nominal_flux)
        }
    }

    /// Spallation neutrons (E > 10 MeV), 70 mm square footprint.
    pub fn neutron(nominal_flux: f64) -> Self {
        Self {
            species: Species::AtmosphericNeutron,
            energy: 10.0,
            let_: 0.0,
            nominal_flux,
            background: Measured::new(0.0, 0.0),
            spot: SpotGeometry::Square { side_mm: 70.0 },
        }
    }
}

// ---------------------------------------------------------------------------
// Device under test
// ---------------------------------------------------------------------------

/// Package pin feeding a monitored supply, or the external Hall sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pin {
    Number(u16),
    External,
}

impl fmt::Display for Pin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pin::Number(n) => write!(f, "{n}"),
            Pin::External => f.write_str("EXTERNAL"),
        }
    }
}

impl FromStr for Pin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("EXTERNAL") {
            return Ok(Pin::External);
        }
        s.parse::<u16>()
            .map(Pin::Number)
            .map_err(|_| format!("invalid pin `{s}`"))
    }
}

impl Serialize for Pin {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Pin {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Channel {
    pub pin: Pin,
    pub name: String,
    pub description: String,
    /// Nominal draw in mA at the 80 °C operating point.
    pub nominal: f64,
}

impl Channel {
    /// Column key, unique because it carries the pin (I_IO appears four times).
    pub fn key(&self) -> String {
        format!("{}/{}", self.pin, self.name)
    }
}

/// The fourteen monitored supplies, in control-board order.
pub fn monitored_channels() -> Vec<Channel> {
    const TABLE: [(Pin, &str, &str, f64); CHANNEL_COUNT] = [
        (Pin::Number(6), "I_IO", "I/O pin", 0.5),
        (Pin::Number(16), "I_REG_0", "PMU regulator", 8.0),
        (Pin::Number(21), "I_IO", "I/O pin", 0.5),
        (Pin::Number(27), "I_OSC", "Internal oscillators", 1.5),
        (Pin::Number(50), "I_ADDR0", "ADC0 reference", 0.5),
        (Pin::Number(56), "I_ADDR1", "ADC1 reference", 0.5),
        (Pin::Number(58), "I_ADV", "Integrated ADC power supply", 4.0),
        (Pin::Number(72), "I_PMU", "Power Management Unit (PMU)", 5.0),
        (Pin::Number(91), "I_IO", "I/O pin", 0.5),
        (Pin::Number(95), "I_REG_1", "PMU regulator", 8.0),
        (Pin::Number(97), "I_FLA", "2MB Flash memory", 8.0),
        (Pin::Number(126), "I_IO", "I/O pin", 0.5),
        (Pin::Number(130), "I_REG_2", "PMU regulator", 8.0),
        (Pin::External, "I_Hall", "Whole current monitor", 4.5),
    ];
    TABLE
        .iter()
        .map(|&(pin, name, description, nominal)| Channel {
            pin,
            name: name.to_string(),
            description: description.to_string(),
            nominal,
        })
        .collect()
}

/// Per-species table of a cross-section, cm².
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerSpecies {
    pub kr84: f64,
    pub kr78: f64,
    pub atmospheric_neutron: f64,
}

impl PerSpecies {
    pub fn get(&self, species: Species) -> f64 {
        match species {
            Species::Kr84 => self.kr84,
            Species::Kr78 => self.kr78,
            Species::AtmosphericNeutron => self.atmospheric_neutron,
        }
    }

    fn entries(&self) -> [(&'static str, f64); 3] {
        [
            ("kr84", self.kr84),
            ("kr78", self.kr78),
            ("atmospheric_neutron", self.atmospheric_neutron),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Health {
    Fine,
    Damaged,
    Broken,
}

impl fmt::Display for Health {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Health::Fine => "fine",
            Health::Damaged => "damaged",
            Health::Broken => "broken",
        })
    }
}

/// Room-temperature recovery applied between campaigns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealConfig {
    pub enabled: bool,
    pub recovery_days: f64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            recovery_days: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DutProfile {
    /// Total draw before irradiation, mA.
    pub baseline_current: Measured,
    /// Drop of the ADC supply once the chip is broken, mA.
    pub broken_current_drop: f64,
    /// Gaussian noise per channel, mA (1σ).
    pub current_noise: f64,
    pub fw_block_cross_section: PerSpecies,
    pub sel_cross_section: PerSpecies,
    /// Extra draw of a latched parasitic path, mA.
    pub latch_current: f64,
    /// Probability of breaking per unit fluence, cm².
    pub break_hazard: f64,
    /// Probability that a break also corrupts the EEPROM image.
    pub eeprom_flip_on_break: f64,
    pub initial_health: Health,
    /// Spontaneous soft resets of a damaged chip, s⁻¹.
    pub spontaneous_reset_rate: f64,
    pub anneal: AnnealConfig,
    pub channels: Vec<Channel>,
}

impl Default for DutProfile {
    fn default() -> Self {
        Self {
            baseline_current: Measured::new(50.0, 0.5),
            broken_current_drop: 1.5,
            current_noise: 0.1,
            fw_block_cross_section: PerSpecies::default(),
            sel_cross_section: PerSpecies::default(),
            latch_current: 1200.0,
            break_hazard: 0.0,
            eeprom_flip_on_break: 0.0,
            initial_health: Health::Fine,
            spontaneous_reset_rate: 0.0,
            anneal: AnnealConfig::default(),
            channels: monitored_channels(),
        }
    }
}

impl DutProfile {
    /// Health after `days` of room-temperature storage. A broken chip whose
    /// continuous-reset source clears is left damaged, never fine.
    pub fn anneal(&self, health: Health, days: f64) -> Health {
        if self.anneal.enabled && days >= self.anneal.recovery_days && health == Health::Broken {
            Health::Damaged
        } else {
            health
        }
    }
}

// ---------------------------------------------------------------------------
// Campaign
// ---------------------------------------------------------------------------

/// Alternating in-beam / flux-monitor durations, seconds.
///
/// A zero `beam_monitor` gives a single irradiation segment spanning the
/// whole campaign, as used when the facility measures the fluence itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhasePlan {
    pub gpio: f64,
    pub beam_monitor: f64,
}

impl Default for PhasePlan {
    fn default() -> Self {
        Self {
            gpio: 600.0,
            beam_monitor: 40.0,
        }
    }
}

impl PhasePlan {
    pub fn single() -> Self {
        Self {
            gpio: f64::INFINITY,
            beam_monitor: 0.0,
        }
    }

    pub fn is_single(&self) -> bool {
        self.beam_monitor == 0.0
    }

    /// Campaign length that yields `irradiation` seconds of in-beam time,
    /// ending inside an in-beam segment.
    pub fn duration_for_irradiation(&self, irradiation: f64) -> f64 {
        if self.is_single() || irradiation <= self.gpio {
            return irradiation;
        }
        let full = (irradiation / self.gpio).floor();
        let rest = irradiation - full * self.gpio;
        if rest == 0.0 {
            full * self.gpio + (full - 1.0) * self.beam_monitor
        } else {
            full * (self.gpio + self.beam_monitor) + rest
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BreakTrigger {
    AtTime(f64),
    AtFluence(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    #[serde(default = "defaults::campaign")]
    pub campaign: String,
    pub beam: BeamSpec,
    #[serde(default)]
    pub dut: DutProfile,
    #[serde(default)]
    pub phase_plan: PhasePlan,
    /// Length of one GPIO test window, s.
    #[serde(default = "defaults::gpio_cycle")]
    pub gpio_cycle: f64,
    /// Pause between GPIO test windows, s.
    #[serde(default = "defaults::gpio_cycle")]
    pub gpio_gap: f64,
    #[serde(default = "defaults::watchdog_timeout")]
    pub watchdog_timeout: f64,
    /// Reboot time after a reset before the heartbeat can resume, s.
    #[serde(default = "defaults::reset_overhead")]
    pub reset_overhead: f64,
    /// Current-sum cut, A.
    #[serde(default = "defaults::latchup_threshold")]
    pub latchup_threshold: f64,
    #[serde(default = "defaults::latchup_deadtime")]
    pub latchup_deadtime: f64,
    pub total_duration: f64,
    #[serde(default = "defaults::temperature")]
    pub temperature: Measured,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::tick")]
    pub tick: f64,
    /// False for radiation-less tests: the device is powered and exercised
    /// but no beam reaches it.
    #[serde(default = "defaults::yes")]
    pub beam_on: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forced_break: Option<BreakTrigger>,
}

mod defaults {
    use super::Measured;

    pub fn campaign() -> String {
        "campaign".to_string()
    }
    pub fn gpio_cycle() -> f64 {
        40.0
    }
    pub fn watchdog_timeout() -> f64 {
        6.7
    }
    pub fn reset_overhead() -> f64 {
        0.3
    }
    pub fn latchup_threshold() -> f64 {
        1.0
    }
    pub fn latchup_deadtime() -> f64 {
        2.0
    }
    pub fn temperature() -> Measured {
        Measured::new(79.5, 1.0)
    }
    pub fn tick() -> f64 {
        0.1
    }
    pub fn yes() -> bool {
        true
    }
}

impl CampaignConfig {
    /// Configuration with every protocol default and the given beam.
    pub fn new(beam: BeamSpec, total_duration: f64) -> Self {
        Self {
            campaign: defaults::campaign(),
            beam,
            dut: DutProfile::default(),
            phase_plan: PhasePlan::default(),
            gpio_cycle: defaults::gpio_cycle(),
            gpio_gap: defaults::gpio_cycle(),
            watchdog_timeout: defaults::watchdog_timeout(),
            reset_overhead: defaults::reset_overhead(),
            latchup_threshold: defaults::latchup_threshold(),
            latchup_deadtime: defaults::latchup_deadtime(),
            total_duration,
            temperature: defaults::temperature(),
            seed: 0,
            tick: defaults::tick(),
            beam_on: true,
            forced_break: None,
        }
    }

    pub fn fw_block_cross_section(&self) -> f64 {
        self.dut.fw_block_cross_section.get(self.beam.species)
    }

    pub fn sel_cross_section(&self) -> f64 {
        self.dut.sel_cross_section.get(self.beam.species)
    }

    /// Flux reaching the device while in the beam.
    pub fn beam_flux(&self) -> f64 {
        if self.beam_on {
            self.beam.nominal_flux
        } else {
            0.0
        }
    }
}

/// A broken invariant, naming the offending field and the rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Checks every invariant of a campaign configuration. Empty means valid.
pub fn validate(config: &CampaignConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut check = |ok: bool, field: &str, rule: &str| {
        if !ok {
            out.push(Violation {
                field: field.to_string(),
                rule: rule.to_string(),
            });
        }
    };
    let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
    let positive = |x: f64| x.is_finite() && x > 0.0;

    let beam = &config.beam;
    check(finite_nonneg(beam.let_), "beam.let", "let >= 0");
    check(finite_nonneg(beam.energy), "beam.energy", "energy >= 0");
    check(
        finite_nonneg(beam.nominal_flux),
        "beam.nominal_flux",
        "nominal_flux >= 0",
    );
    check(
        finite_nonneg(beam.background.value),
        "beam.background.value",
        "background >= 0",
    );
    check(
        finite_nonneg(beam.background.uncertainty),
        "beam.background.uncertainty",
        "uncertainty >= 0",
    );
    if beam.species == Species::AtmosphericNeutron {
        check(beam.let_ == 0.0, "beam.let", "neutron beams have let = 0");
    }
    let spot_ok = match beam.spot {
        SpotGeometry::Circle { diameter_mm } => positive(diameter_mm),
        SpotGeometry::Square { side_mm } => positive(side_mm),
    };
    check(spot_ok, "beam.spot", "spot size > 0");

    let dut = &config.dut;
    check(
        dut.channels.len() == CHANNEL_COUNT,
        "dut.channels",
        "exactly 14 channels",
    );
    for (name, value) in dut.fw_block_cross_section.entries() {
        check(
            finite_nonneg(value),
            &format!("dut.fw_block_cross_section.{name}"),
            "cross-section >= 0",
        );
    }
    for (name, value) in dut.sel_cross_section.entries() {
        check(
            finite_nonneg(value),
            &format!("dut.sel_cross_section.{name}"),
            "cross-section >= 0",
        );
    }
    check(
        finite_nonneg(dut.broken_current_drop),
        "dut.broken_current_drop",
        "broken_current_drop >= 0",
    );
    check(
        dut.baseline_current.value > dut.broken_current_drop,
        "dut.baseline_current",
        "baseline_current > broken_current_drop",
    );
    check(
        finite_nonneg(dut.baseline_current.uncertainty),
        "dut.baseline_current.uncertainty",
        "uncertainty >= 0",
    );
    if dut.channels.len() == CHANNEL_COUNT {
        let total: f64 = dut.channels.iter().map(|c| c.nominal).sum();
        check(
            (total - dut.baseline_current.value).abs() <= dut.baseline_current.uncertainty + 1e-9,
            "dut.channels",
            "channel nominal currents sum to baseline_current",
        );
        check(
            dut.channels.iter().all(|c| finite_nonneg(c.nominal)),
            "dut.channels",
            "channel nominal current >= 0",
        );
    }
    check(
        finite_nonneg(dut.current_noise),
        "dut.current_noise",
        "current_noise >= 0",
    );
    check(
        finite_nonneg(dut.latch_current),
        "dut.latch_current",
        "latch_current >= 0",
    );
    check(
        finite_nonneg(dut.break_hazard),
        "dut.break_hazard",
        "break_hazard >= 0",
    );
    check(
        (0.0..=1.0).contains(&dut.eeprom_flip_on_break),
        "dut.eeprom_flip_on_break",
        "probability in [0, 1]",
    );
    check(
        finite_nonneg(dut.spontaneous_reset_rate),
        "dut.spontaneous_reset_rate",
        "spontaneous_reset_rate >= 0",
    );
    check(
        finite_nonneg(dut.anneal.recovery_days),
        "dut.anneal.recovery_days",
        "recovery_days >= 0",
    );

    check(
        config.phase_plan.gpio > 0.0 && !config.phase_plan.gpio.is_nan(),
        "phase_plan.gpio",
        "gpio > 0",
    );
    check(
        finite_nonneg(config.phase_plan.beam_monitor),
        "phase_plan.beam_monitor",
        "beam_monitor >= 0",
    );
    check(positive(config.gpio_cycle), "gpio_cycle", "gpio_cycle > 0");
    check(finite_nonneg(config.gpio_gap), "gpio_gap", "gpio_gap >= 0");
    check(
        positive(config.watchdog_timeout),
        "watchdog_timeout",
        "watchdog_timeout > 0",
    );
    check(
        finite_nonneg(config.reset_overhead),
        "reset_overhead",
        "reset_overhead >= 0",
    );
    check(
        positive(config.latchup_threshold),
        "latchup_threshold",
        "latchup_threshold > 0",
    );
    check(
        finite_nonneg(config.latchup_deadtime),
        "latchup_deadtime",
        "latchup_deadtime >= 0",
    );
    check(
        positive(config.total_duration),
        "total_duration",
        "total_duration > 0",
    );
    check(positive(config.tick), "tick", "tick > 0");
    check(
        config.tick < config.watchdog_timeout,
        "tick",
        "tick < watchdog_timeout",
    );
    check(
        finite_nonneg(config.temperature.uncertainty),
        "temperature.uncertainty",
        "uncertainty >= 0",
    );
    match config.forced_break {
        Some(BreakTrigger::AtTime(t)) => {
            check(finite_nonneg(t), "forced_break.at_time", "at_time >= 0")
        }
        Some(BreakTrigger::AtFluence(f)) => check(
            finite_nonneg(f),
            "forced_break.at_fluence",
            "at_fluence >= 0",
        ),
        None => {}
    }
    out
}

// ---------------------------------------------------------------------------
// Telemetry
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Device in the beam running the GPIO test.
    Gpio,
    /// Device moved aside, scintillator counting.
    BeamMonitor,
    /// No beam at all (radiation-less test).
    Off,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Gpio => "gpio",
            Phase::BeamMonitor => "beam",
            Phase::Off => "off",
        }
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gpio" => Ok(Phase::Gpio),
            "beam" => Ok(Phase::BeamMonitor),
            "off" => Ok(Phase::Off),
            other => Err(format!("unknown phase `{other}`")),
        }
    }
}

/// One sample of the control board, taken every tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRecord {
    pub t: f64,
    /// Per-channel draw in mA, `None` while the supply is off.
    pub currents: Option<[f64; CHANNEL_COUNT]>,
    /// Sum of the channel currents, A.
    pub current_sum: f64,
    pub heartbeat_ok: bool,
    pub phase: Phase,
    pub power_on: bool,
}

impl TelemetryRecord {
    pub fn powered(t: f64, currents: [f64; CHANNEL_COUNT], heartbeat_ok: bool, phase: Phase) -> Self {
        let current_sum = currents.iter().sum::<f64>() / 1000.0;
        Self {
            t,
            currents: Some(currents),
            current_sum,
            heartbeat_ok,
            phase,
            power_on: true,
        }
    }

    pub fn unpowered(t: f64, phase: Phase) -> Self {
        Self {
            t,
            currents: None,
            current_sum: 0.0,
            heartbeat_ok: false,
            phase,
            power_on: false,
        }
    }

    pub fn adc_current(&self) -> Option<f64> {
        self.currents.map(|c| c[ADC_CHANNEL])
    }
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

/// Event discriminant, used for counting and on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventTag {
    FwBlock,
    Sel,
    HardReset,
    SoftReset,
    Break,
    PowerOff,
    PowerOn,
    ScintCount,
}

impl EventTag {
    pub const ALL: [EventTag; 8] = [
        EventTag::FwBlock,
        EventTag::Sel,
        EventTag::HardReset,
        EventTag::SoftReset,
        EventTag::Break,
        EventTag::PowerOff,
        EventTag::PowerOn,
        EventTag::ScintCount,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventTag::FwBlock => "fw_block",
            EventTag::Sel => "sel",
            EventTag::HardReset => "hard_reset",
            EventTag::SoftReset => "soft_reset",
            EventTag::Break => "break",
            EventTag::PowerOff => "power_off",
            EventTag::PowerOn => "power_on",
            EventTag::ScintCount => "scint_count",
        }
    }
}

impl FromStr for EventTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown event kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// Firmware halt. `masked` when the firmware was already halted or
    /// rebooting, so the upset changed nothing observable.
    FwBlock { masked: bool },
    /// Latch-up cut; `current_sum` is the measured sum in A.
    Sel { current_sum: f64 },
    HardReset,
    SoftReset,
    /// `fluence` accumulated when the chip broke, cm⁻².
    Break { fluence: f64 },
    PowerOff,
    PowerOn,
    /// Scintillator counts over a flux-monitor window of `window` seconds on
    /// `area` cm².
    ScintCount { counts: u64, window: f64, area: f64 },
}

impl EventKind {
    pub fn tag(&self) -> EventTag {
        match self {
            EventKind::FwBlock { .. } => EventTag::FwBlock,
            EventKind::Sel { .. } => EventTag::Sel,
            EventKind::HardReset => EventTag::HardReset,
            EventKind::SoftReset => EventTag::SoftReset,
            EventKind::Break { .. } => EventTag::Break,
            EventKind::PowerOff => EventTag::PowerOff,
            EventKind::PowerOn => EventTag::PowerOn,
            EventKind::ScintCount { .. } => EventTag::ScintCount,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
}

/// Time-ordered event sequence; ordering and the single-break rule are
/// enforced on insertion.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: f64, kind: EventKind) -> Result<(), DomainError> {
        if !t.is_finite() {
            return Err(DomainError::NonFinite(t));
        }
        if let Some(last) = self.events.last() {
            if t < last.t {
                return Err(DomainError::OutOfOrder { t, last: last.t });
            }
        }
        if kind.tag() == EventTag::Break && self.count(EventTag::Break) > 0 {
            return Err(DomainError::DuplicateBreak { t });
        }
        self.events.push(Event { t, kind });
        Ok(())
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Event> {
        self.events.iter()
    }

    pub fn count(&self, tag: EventTag) -> usize {
        self.events.iter().filter(|e| e.kind.tag() == tag).count()
    }

    pub fn times(&self, tag: EventTag) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.kind.tag() == tag)
            .map(|e| e.t)
            .collect()
    }

    /// Hard and soft resets merged, in time order.
    pub fn reset_times(&self) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| matches!(e.kind.tag(), EventTag::HardReset | EventTag::SoftReset))
            .map(|e| e.t)
            .collect()
    }

    pub fn break_time(&self) -> Option<f64> {
        self.events
            .iter()
            .find(|e| e.kind.tag() == EventTag::Break)
            .map(|e| e.t)
    }

    /// Checks that every SEL is followed by a power-off at the same instant
    /// and a power-on `deadtime` later (within `slack` seconds).
    pub fn check_latchup_protocol(&self, deadtime: f64, slack: f64) -> Result<(), String> {
        for (i, ev) in self.events.iter().enumerate() {
            if ev.kind.tag() != EventTag::Sel {
                continue;
            }
            let rest = &self.events[i + 1..];
            let off = rest
                .iter()
                .position(|e| e.kind.tag() == EventTag::PowerOff)
                .ok_or_else(|| format!("SEL at {} without power-off", ev.t))?;
            if (rest[off].t - ev.t).abs() > slack {
                return Err(format!("power-off {} s after SEL at {}", rest[off].t - ev.t, ev.t));
            }
            let on = rest[off + 1..]
                .iter()
                .find(|e| e.kind.tag() == EventTag::PowerOn)
                .ok_or_else(|| format!("SEL at {} without power-on", ev.t))?;
            if ((on.t - rest[off].t) - deadtime).abs() > slack {
                return Err(format!(
                    "power restored {} s after SEL at {}, expected {deadtime}",
                    on.t - rest[off].t,
                    ev.t
                ));
            }
        }
        Ok(())
    }
}
