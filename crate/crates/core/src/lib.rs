//! Single-event-effects test bench: campaign simulator, dosimetry and
//! cross-section analysis, chip-health classification, and the reference
//! tables the analysis is checked against.

pub mod analysis;
pub mod classify;
pub mod domain;
pub mod io;
pub mod physics;
pub mod simulator;
pub mod traces;
pub mod verify;

pub use analysis::{AnalysisRow, ReportBundle};
pub use classify::{chip_status, detect_reset_runs, HealthVerdict, ResetLog, ResetRun, RunParams};
pub use domain::{
    validate, BeamSpec, CampaignConfig, DutProfile, Event, EventKind, EventLog, EventTag, Health, Measured, Phase,
    Quantity, Species, TelemetryRecord, Unit, Violation,
};
pub use io::{EventLogHeader, ReferenceTables, TelemetryHeader};
pub use simulator::{run_campaign, CampaignRun, PhaseTimeline};
