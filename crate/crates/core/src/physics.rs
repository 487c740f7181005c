//! Dosimetry, cross-sections and event-rate extrapolation.
//!
//! All functions are pure. Units follow the radiation-testing convention:
//! fluence in cm⁻², flux in cm⁻²·s⁻¹, LET in MeV·cm²·mg⁻¹, dose in Gy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DomainError, Quantity, Unit};

/// MeV·mg⁻¹ → J·kg⁻¹ conversion folded into the dose formula.
pub const DOSE_FACTOR: f64 = 1.602e-7;

/// Julian year, s.
pub const YEAR_SECONDS: f64 = 365.25 * 86_400.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhysicsError {
    #[error("{name} must be {rule}, got {value}")]
    Domain {
        name: &'static str,
        rule: &'static str,
        value: f64,
    },
    #[error(transparent)]
    Unit(#[from] DomainError),
}

fn require(ok: bool, name: &'static str, rule: &'static str, value: f64) -> Result<(), PhysicsError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(PhysicsError::Domain { name, rule, value })
    }
}

/// Absorbed dose in Gy from fluence and LET.
pub fn dose_gy(fluence: f64, let_: f64) -> Result<f64, PhysicsError> {
    require(fluence >= 0.0, "fluence", ">= 0", fluence)?;
    require(let_ >= 0.0, "let", ">= 0", let_)?;
    Ok(DOSE_FACTOR * fluence * let_)
}

/// Combined SEL + firmware-block cross-section, cm².
pub fn sel_fw_cross_section(n_sel: u64, n_fw_block: u64, fluence: f64) -> Result<f64, PhysicsError> {
    require(fluence > 0.0, "fluence", "> 0", fluence)?;
    Ok((n_sel + n_fw_block) as f64 / fluence)
}

pub fn mean_flux(fluence: f64, duration: f64) -> Result<f64, PhysicsError> {
    require(duration > 0.0, "duration", "> 0", duration)?;
    require(fluence >= 0.0, "fluence", ">= 0", fluence)?;
    Ok(fluence / duration)
}

/// Fluence delivered at `mean_flux` over `duration`. The uncertainty is the
/// time integral of the background uncertainty.
pub fn effective_fluence(
    mean_flux: f64,
    duration: f64,
    background: &Quantity,
) -> Result<Quantity, PhysicsError> {
    require(duration >= 0.0, "duration", ">= 0", duration)?;
    require(mean_flux >= 0.0, "mean_flux", ">= 0", mean_flux)?;
    let bg_unc = background.uncertainty();
    background.value_in(Unit::Flux)?;
    Ok(Quantity::new(mean_flux * duration, bg_unc * duration, Unit::PerCm2)?)
}

/// Expected events per second at a given cross-section and flux.
pub fn event_rate(sigma: f64, flux: f64) -> Result<f64, PhysicsError> {
    require(sigma >= 0.0, "sigma", ">= 0", sigma)?;
    require(flux >= 0.0, "flux", ">= 0", flux)?;
    Ok(sigma * flux)
}

pub fn mean_period(rate: f64) -> Result<f64, PhysicsError> {
    require(rate > 0.0, "rate", "> 0", rate)?;
    Ok(1.0 / rate)
}

pub fn expected_mission_events(rate: f64, mission: f64) -> Result<f64, PhysicsError> {
    require(rate >= 0.0, "rate", ">= 0", rate)?;
    require(mission >= 0.0, "mission", ">= 0", mission)?;
    Ok(rate * mission)
}

pub fn mission_seconds(years: f64) -> f64 {
    years * YEAR_SECONDS
}

/// Net beam flux from a scintillator count.
///
/// Counting noise is Poisson (√N) and is added in quadrature to the
/// background uncertainty. Negative net values clamp to zero.
pub fn estimate_flux_from_scintillator(
    counts: u64,
    area: f64,
    duration: f64,
    background: &Quantity,
) -> Result<Quantity, PhysicsError> {
    require(area > 0.0, "area", "> 0", area)?;
    require(duration > 0.0, "duration", "> 0", duration)?;
    let bg = background.value_in(Unit::Flux)?;
    let exposure = area * duration;
    let raw = counts as f64 / exposure;
    let counting = (counts as f64).sqrt() / exposure;
    Ok(Quantity::new(
        (raw - bg).max(0.0),
        counting.hypot(background.uncertainty()),
        Unit::Flux,
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    Experiment,
    Leo,
    Geo,
}

impl Environment {
    pub fn as_str(self) -> &'static str {
        match self {
            Environment::Experiment => "EXPERIMENT",
            Environment::Leo => "LEO",
            Environment::Geo => "GEO",
        }
    }
}

/// Ion flux above a given LET in some environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentFlux {
    pub name: Environment,
    #[serde(rename = "let")]
    pub let_: f64,
    pub flux: f64,
}

/// Rate, mean period and mission count for one environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub environment: EnvironmentFlux,
    pub sigma: f64,
    pub rate: f64,
    /// `None` for a zero rate.
    pub period: Option<f64>,
    pub mission_events: f64,
}

pub fn extrapolate(
    sigma: f64,
    environment: EnvironmentFlux,
    mission: f64,
) -> Result<Extrapolation, PhysicsError> {
    require(environment.flux >= 0.0, "flux", ">= 0", environment.flux)?;
    let rate = event_rate(sigma, environment.flux)?;
    Ok(Extrapolation {
        environment,
        sigma,
        rate,
        period: mean_period(rate).ok(),
        mission_events: expected_mission_events(rate, mission)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxSegment {
    pub start: f64,
    pub end: f64,
    pub flux: f64,
}

/// Piecewise-constant flux over contiguous segments starting at t = 0.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FluxProfile {
    segments: Vec<FluxSegment>,
}

impl FluxProfile {
    /// Segments must be contiguous, ordered and start at zero.
    pub fn new(segments: Vec<FluxSegment>) -> Result<Self, PhysicsError> {
        let mut t = 0.0;
        for s in &segments {
            require(s.start == t, "segment start", "contiguous", s.start)?;
            require(s.end >= s.start, "segment end", ">= start", s.end)?;
            require(s.flux >= 0.0, "flux", ">= 0", s.flux)?;
            t = s.end;
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[FluxSegment] {
        &self.segments
    }

    pub fn end(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.end)
    }

    pub fn flux_at(&self, t: f64) -> f64 {
        self.segments
            .iter()
            .find(|s| s.start <= t && t < s.end)
            .map_or(0.0, |s| s.flux)
    }

    /// Fluence accrued over `[a, b]`.
    pub fn fluence_between(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let first = self.segments.partition_point(|s| s.end <= a);
        self.segments[first..]
            .iter()
            .take_while(|s| s.start < b)
            .map(|s| s.flux * (b.min(s.end) - a.max(s.start)).max(0.0))
            .sum()
    }

    pub fn fluence_at(&self, t: f64) -> f64 {
        self.fluence_between(0.0, t)
    }

    pub fn total_fluence(&self) -> f64 {
        self.segments.iter().map(|s| s.flux * (s.end - s.start)).sum()
    }

    /// Earliest time at which the accrued fluence reaches `fluence`, or
    /// `None` if the profile never gets there.
    pub fn time_at(&self, fluence: f64) -> Option<f64> {
        if fluence <= 0.0 {
            return Some(0.0);
        }
        let mut acc = 0.0;
        for s in &self.segments {
            let seg = s.flux * (s.end - s.start);
            if s.flux > 0.0 && acc + seg >= fluence {
                return Some((s.start + (fluence - acc) / s.flux).min(s.end));
            }
            acc += seg;
        }
        None
    }
}

/// Rounds to `sig` significant figures.
pub fn round_sig(x: f64, sig: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let exp = x.abs().log10().floor() as i32;
    round_at(x, sig as i32 - 1 - exp)
}

/// Rounds to `decimals` places after the decimal point.
pub fn round_decimals(x: f64, decimals: u32) -> f64 {
    round_at(x, decimals as i32)
}

// Powers of ten are exact up to 1e22, so keep the scale integral.
fn round_at(x: f64, places: i32) -> f64 {
    if places >= 0 {
        let scale = 10f64.powi(places);
        (x * scale).round() / scale
    } else {
        let scale = 10f64.powi(-places);
        (x / scale).round() * scale
    }
}
